//! Experiment configuration, read from TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::profiles::Profile;
use crate::carleman::{ExtremalConfig, ExtremalSolver, DEFAULT_LAMBDAS, DEFAULT_S0};
use crate::discretization::{CoefficientSet, SolverOptions, Source, SpatialGrid, TimeGrid};
use crate::error::{Error, Result};
use crate::hum::HumConfig;
use crate::semilinear::{FixedPointConfig, Nonlinearity};
use crate::weights::{BoxRegion, DomainSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    #[serde(default = "default_initial")]
    pub initial: Profile,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub hum: HumSection,
    #[serde(default)]
    pub carleman: CarlemanSection,
    #[serde(default)]
    pub semilinear: SemilinearSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_initial() -> Profile {
    Profile::Sinusoidal {
        amplitude: 1.0,
        modes: vec![1],
        frequency: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub extents: Vec<f64>,
    /// Control region ω.
    pub control: BoxRegion,
    /// Inner region ω₀ of the weight construction.
    pub inner: BoxRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: Vec<usize>,
    pub steps: usize,
    pub horizon: f64,
    #[serde(default = "yes")]
    pub dealias: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub a0: Option<Profile>,
    pub a1: Option<Profile>,
    /// One profile per axis.
    #[serde(default)]
    pub b0: Vec<Profile>,
    /// Row-major, `dims²` profiles.
    #[serde(default)]
    pub d: Vec<Profile>,
    pub source: Option<Profile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub lambdas: Vec<f64>,
    /// `s = s0 (√T + T)`.
    pub s0: Vec<f64>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            s0: DEFAULT_S0.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumSection {
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub precondition: bool,
    /// Report the weighted source norm at `(s, λ)` when set.
    pub weighted_source: Option<[f64; 2]>,
}

impl Default for HumSection {
    fn default() -> Self {
        let d = HumConfig::default();
        Self {
            epsilon: 1e-4,
            epsilons: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            tol: d.tol,
            max_iter: d.max_iter,
            precondition: d.precondition,
            weighted_source: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditChoice {
    Lemma,
    Theorem,
    Extremal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanSection {
    pub audits: Vec<AuditChoice>,
    /// Terminal datum of the audited adjoint; the initial profile when absent.
    pub z0: Option<Profile>,
    pub extremal_solver: ExtremalChoice,
    pub extremal_tol: f64,
    pub extremal_max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremalChoice {
    Iterative,
    Dense,
}

impl Default for CarlemanSection {
    fn default() -> Self {
        let d = ExtremalConfig::default();
        Self {
            audits: vec![
                AuditChoice::Lemma,
                AuditChoice::Theorem,
                AuditChoice::Extremal,
            ],
            z0: None,
            extremal_solver: ExtremalChoice::Iterative,
            extremal_tol: d.tol,
            extremal_max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemilinearSection {
    pub nonlinearity: Nonlinearity,
    pub tol: f64,
    pub max_iter: usize,
    pub quad_nodes: usize,
    pub damping: f64,
    /// Run the `F = G(y)` variant, which skips derivatives of the iterate.
    pub state_only: bool,
}

impl Default for SemilinearSection {
    fn default() -> Self {
        let d = FixedPointConfig::default();
        Self {
            nonlinearity: Nonlinearity::Sine { a: 0.1, b: 1.0 },
            tol: d.tol,
            max_iter: d.max_iter,
            quad_nodes: d.quad_nodes,
            damping: d.damping,
            state_only: false,
        }
    }
}

/// Grids, coefficients and data built from a validated config.
pub struct Setup {
    pub domain: DomainSpec,
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    pub coefs: CoefficientSet,
    pub y0: Vec<f64>,
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let domain = self.domain_spec();
        domain.validate()?;
        let dims = domain.dims();
        let g = &self.grid;
        if g.nodes.len() != dims {
            return Err(Error::InvalidParameter(format!(
                "grid.nodes needs {dims} entries, got {}",
                g.nodes.len()
            )));
        }
        if let Some(n) = g.nodes.iter().find(|n| **n < 8) {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be at least 8 nodes per axis, got {n}"
            )));
        }
        if g.steps < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid.steps must be at least 8, got {}",
                g.steps
            )));
        }
        if !(g.horizon.is_finite() && g.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time horizon must be positive, got {}",
                g.horizon
            )));
        }
        self.initial.validate("initial", dims)?;
        let c = &self.coefficients;
        for (name, p) in [("a0", &c.a0), ("a1", &c.a1), ("source", &c.source)] {
            if let Some(p) = p {
                p.validate(name, dims)?;
            }
        }
        if !(c.b0.is_empty() || c.b0.len() == dims) {
            return Err(Error::InvalidParameter(format!(
                "coefficients.b0 needs {dims} profiles, got {}",
                c.b0.len()
            )));
        }
        if !(c.d.is_empty() || c.d.len() == dims * dims) {
            return Err(Error::InvalidParameter(format!(
                "coefficients.d needs {} profiles, got {}",
                dims * dims,
                c.d.len()
            )));
        }
        for p in c.b0.iter().chain(&c.d) {
            p.validate("coefficient", dims)?;
        }
        let w = &self.weights;
        if w.lambdas.is_empty() || w.s0.is_empty() {
            return Err(Error::InvalidParameter(
                "weights.lambdas and weights.s0 must be non-empty".into(),
            ));
        }
        if w.lambdas
            .iter()
            .chain(&w.s0)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidParameter(
                "weight parameters must be positive".into(),
            ));
        }
        self.hum_config(self.hum.epsilon).validate()?;
        if self
            .hum
            .epsilons
            .iter()
            .any(|e| !(e.is_finite() && *e > 0.0))
        {
            return Err(Error::InvalidParameter(
                "hum.epsilons must be positive".into(),
            ));
        }
        if let Some(z0) = &self.carleman.z0 {
            z0.validate("carleman.z0", dims)?;
        }
        if !(self.carleman.extremal_tol > 0.0) || self.carleman.extremal_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "extremal tolerance and iteration cap must be positive".into(),
            ));
        }
        self.semilinear.nonlinearity.validate()?;
        self.fixed_point_config().validate()?;
        if self.semilinear.quad_nodes < 2 {
            return Err(Error::InvalidParameter(
                "semilinear.quad_nodes must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn domain_spec(&self) -> DomainSpec {
        DomainSpec {
            extents: self.domain.extents.clone(),
            control: self.domain.control.clone(),
            inner: self.domain.inner.clone(),
        }
    }

    pub fn s_values(&self) -> Vec<f64> {
        let t = self.grid.horizon;
        self.weights
            .s0
            .iter()
            .map(|s0| s0 * (t.sqrt() + t))
            .collect()
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            dealias: self.grid.dealias,
        }
    }

    pub fn hum_config(&self, epsilon: f64) -> HumConfig {
        HumConfig {
            epsilon,
            tol: self.hum.tol,
            max_iter: self.hum.max_iter,
            precondition: self.hum.precondition,
            solver: self.solver_options(),
        }
    }

    pub fn extremal_config(&self) -> ExtremalConfig {
        ExtremalConfig {
            solver: match self.carleman.extremal_solver {
                ExtremalChoice::Iterative => ExtremalSolver::Iterative,
                ExtremalChoice::Dense => ExtremalSolver::Dense,
            },
            tol: self.carleman.extremal_tol,
            max_iter: self.carleman.extremal_max_iter,
        }
    }

    pub fn fixed_point_config(&self) -> FixedPointConfig {
        let s = &self.semilinear;
        FixedPointConfig {
            hum: self.hum_config(self.hum.epsilon),
            tol: s.tol,
            max_iter: s.max_iter,
            quad_nodes: s.quad_nodes,
            damping: s.damping,
        }
    }

    /// Builds grids and coefficients; call after [`Self::validate`].
    pub fn setup(&self) -> Result<Setup> {
        let domain = self.domain_spec();
        let grid = SpatialGrid::new(&self.domain.extents, &self.grid.nodes)?;
        let time = TimeGrid::new(self.grid.horizon, self.grid.steps)?;
        let seed = self.seed;
        let coef = |p: &Option<Profile>| {
            p.as_ref()
                .map_or(crate::discretization::Coefficient::Zero, |p| {
                    p.coefficient(&grid, &time, seed)
                })
        };
        let c = &self.coefficients;
        let mut coefs = CoefficientSet::zero(&grid)
            .with_masks(domain.control.mask(&grid), domain.inner.mask(&grid));
        coefs.a0 = coef(&c.a0);
        coefs.a1 = coef(&c.a1);
        if !c.b0.is_empty() {
            coefs.b0 =
                c.b0.iter()
                    .map(|p| p.coefficient(&grid, &time, seed))
                    .collect();
        }
        if !c.d.is_empty() {
            coefs.d =
                c.d.iter()
                    .map(|p| p.coefficient(&grid, &time, seed))
                    .collect();
        }
        if let Some(g) = &c.source {
            coefs.source = Source::Plain(g.coefficient(&grid, &time, seed));
        }
        coefs.validate(&grid, &time)?;
        let y0 = self.initial.sample(&grid, 0.0, seed);
        Ok(Setup {
            domain,
            grid,
            time,
            coefs,
            y0,
            solver: self.solver_options(),
        })
    }

    /// The linear benchmark: unit interval, `T = 0.5`, `ω = (0.3, 0.7)`,
    /// `y0 = sin(πx)`, `g = 0`.
    pub fn default_1d() -> Self {
        Self {
            seed: 0,
            output: default_output(),
            domain: DomainConfig {
                extents: vec![1.0],
                control: BoxRegion::new(vec![0.3], vec![0.7]),
                inner: BoxRegion::new(vec![0.4], vec![0.6]),
            },
            grid: GridConfig {
                nodes: vec![32],
                steps: 200,
                horizon: 0.5,
                dealias: true,
            },
            initial: default_initial(),
            coefficients: CoefficientConfig::default(),
            weights: WeightConfig::default(),
            hum: HumSection::default(),
            carleman: CarlemanSection::default(),
            semilinear: SemilinearSection::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default_1d();
        let text = c.to_toml();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_control_outside_domain() {
        let mut c = ExperimentConfig::default_1d();
        c.domain.control = BoxRegion::new(vec![0.3], vec![1.2]);
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("control region"), "{err}");
    }

    #[test]
    fn rejects_coarse_grid() {
        let mut c = ExperimentConfig::default_1d();
        c.grid.nodes = vec![4];
        assert!(c.validate().is_err());
    }
}
