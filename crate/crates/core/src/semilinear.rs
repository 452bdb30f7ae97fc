//! Fixed-point control of `y_t + Δ²y + K y = F(y, ∇y, ∇²y) + χ_ω v + g`.
//!
//! Each step linearizes `F` around the current iterate through the averaged
//! Jacobians `G1, G2, G3` and hands the shifted linear problem to
//! [`hum_solve`].

use serde::{Deserialize, Serialize};

use crate::discretization::{Coefficient, CoefficientSet, SpaceTimeField, SpatialGrid, TimeGrid};
use crate::error::{Error, Result};
use crate::hum::{hum_solve, HumConfig, HumProblem, HumResult};
use crate::quadrature::gauss_legendre_unit;
use crate::weights::WeightBundle;

/// Built-in nonlinearities with closed-form derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Nonlinearity {
    Zero,
    /// `c u`
    Linear {
        c: f64,
    },
    /// `a sin(b u)`
    Sine {
        a: f64,
        b: f64,
    },
    /// `a tanh(b u)`
    Tanh {
        a: f64,
        b: f64,
    },
    /// `a sin(b u) + c Σᵢ sin(pᵢ) + d Σᵢⱼ sin(rᵢⱼ)`
    Mixed {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    },
}

/// Nonlinearities of `y` alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ScalarNonlinearity {
    Zero,
    Linear { c: f64 },
    Sine { a: f64, b: f64 },
    Tanh { a: f64, b: f64 },
}

impl From<ScalarNonlinearity> for Nonlinearity {
    fn from(g: ScalarNonlinearity) -> Self {
        match g {
            ScalarNonlinearity::Zero => Nonlinearity::Zero,
            ScalarNonlinearity::Linear { c } => Nonlinearity::Linear { c },
            ScalarNonlinearity::Sine { a, b } => Nonlinearity::Sine { a, b },
            ScalarNonlinearity::Tanh { a, b } => Nonlinearity::Tanh { a, b },
        }
    }
}

impl TryFrom<Nonlinearity> for ScalarNonlinearity {
    type Error = Error;

    fn try_from(f: Nonlinearity) -> Result<Self> {
        match f {
            Nonlinearity::Zero => Ok(ScalarNonlinearity::Zero),
            Nonlinearity::Linear { c } => Ok(ScalarNonlinearity::Linear { c }),
            Nonlinearity::Sine { a, b } => Ok(ScalarNonlinearity::Sine { a, b }),
            Nonlinearity::Tanh { a, b } => Ok(ScalarNonlinearity::Tanh { a, b }),
            Nonlinearity::Mixed { .. } => Err(Error::InvalidParameter(
                "the state-only variant needs a nonlinearity of y alone".into(),
            )),
        }
    }
}

impl Nonlinearity {
    pub fn validate(&self) -> Result<()> {
        let params: &[f64] = match self {
            Nonlinearity::Zero => &[],
            Nonlinearity::Linear { c } => &[*c][..],
            Nonlinearity::Sine { a, b } | Nonlinearity::Tanh { a, b } => &[*a, *b][..],
            Nonlinearity::Mixed { a, b, c, d } => &[*a, *b, *c, *d][..],
        };
        let params = params.to_vec();
        if params.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "nonlinearity parameters must be finite: {self:?}"
            )))
        }
    }

    pub fn eval(&self, u: f64, p: &[f64], r: &[f64]) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear { c } => c * u,
            Nonlinearity::Sine { a, b } => a * (b * u).sin(),
            Nonlinearity::Tanh { a, b } => a * (b * u).tanh(),
            Nonlinearity::Mixed { a, b, c, d } => {
                a * (b * u).sin()
                    + c * p.iter().map(|x| x.sin()).sum::<f64>()
                    + d * r.iter().map(|x| x.sin()).sum::<f64>()
            }
        }
    }

    pub fn d_u(&self, u: f64) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear { c } => c,
            Nonlinearity::Sine { a, b } | Nonlinearity::Mixed { a, b, .. } => a * b * (b * u).cos(),
            Nonlinearity::Tanh { a, b } => {
                let c = (b * u).cosh();
                a * b / (c * c)
            }
        }
    }

    /// `∂F/∂pᵢ`.
    pub fn d_p(&self, p: f64) -> f64 {
        match *self {
            Nonlinearity::Mixed { c, .. } => c * p.cos(),
            _ => 0.0,
        }
    }

    /// `∂F/∂rᵢⱼ`.
    pub fn d_r(&self, r: f64) -> f64 {
        match *self {
            Nonlinearity::Mixed { d, .. } => d * r.cos(),
            _ => 0.0,
        }
    }

    pub fn depends_on_gradient(&self) -> bool {
        matches!(self, Nonlinearity::Mixed { c, .. } if *c != 0.0)
    }

    pub fn depends_on_hessian(&self) -> bool {
        matches!(self, Nonlinearity::Mixed { d, .. } if *d != 0.0)
    }

    /// Bound on `|∂F/∂y| + |∇_p F| + Σ|∂F/∂rᵢⱼ|` in dimension `dims`.
    pub fn bound(&self, dims: usize) -> f64 {
        let n = dims as f64;
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear { c } => c.abs(),
            Nonlinearity::Sine { a, b } | Nonlinearity::Tanh { a, b } => (a * b).abs(),
            Nonlinearity::Mixed { a, b, c, d } => (a * b).abs() + n * c.abs() + n * n * d.abs(),
        }
    }
}

/// Averaged Jacobians at the time nodes, interior nodes only.
#[derive(Debug, Clone)]
pub struct Jacobians {
    /// `G1[n][i]`.
    pub g1: Vec<Vec<f64>>,
    /// `G2[axis][n][i]`; empty when `F` ignores `∇y`.
    pub g2: Vec<Vec<Vec<f64>>>,
    /// `G3[i * dims + j][n][node]`; empty when `F` ignores `∇²y`.
    pub g3: Vec<Vec<Vec<f64>>>,
}

impl Jacobians {
    /// `max(‖G1‖∞, ‖G2‖∞, ‖G3‖∞)`, componentwise.
    pub fn sup(&self) -> f64 {
        let field_sup = |f: &Vec<Vec<f64>>| f.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut out = field_sup(&self.g1);
        for f in self.g2.iter().chain(&self.g3) {
            out = out.max(field_sup(f));
        }
        out
    }
}

/// `z`, `∇z`, `∇²z` at interior nodes for every time node.
struct Derivatives {
    value: Vec<Vec<f64>>,
    gradient: Vec<Vec<Vec<f64>>>,
    hessian: Vec<Vec<Vec<f64>>>,
}

fn derivatives(
    z: &SpaceTimeField,
    grid: &SpatialGrid,
    gradient: bool,
    hessian: bool,
) -> Result<Derivatives> {
    let dims = grid.dims();
    let mut out = Derivatives {
        value: z.slices.clone(),
        gradient: if gradient {
            vec![Vec::new(); dims]
        } else {
            Vec::new()
        },
        hessian: if hessian {
            vec![Vec::new(); dims * dims]
        } else {
            Vec::new()
        },
    };
    if !gradient && !hessian {
        return Ok(out);
    }
    for slice in &z.slices {
        let modal = grid.analysis(slice);
        if gradient {
            for (i, g) in out.gradient.iter_mut().enumerate() {
                g.push(grid.synthesize(&modal, &grid.unit_order(i, 1), false));
            }
        }
        if hessian {
            for i in 0..dims {
                for j in 0..dims {
                    let h = grid.synthesize(&modal, &grid.pair_order(i, j), false);
                    if h.iter().any(|v| !v.is_finite()) {
                        return Err(Error::UnresolvedIterate);
                    }
                    out.hessian[i * dims + j].push(h);
                }
            }
        }
    }
    Ok(out)
}

/// `G1 = ∫₀¹ ∂F/∂y(τz, τ∇z, τ∇²z) dτ` and the analogous `G2`, `G3`, by
/// Gauss–Legendre quadrature with `quad_nodes` points.
pub fn averaged_jacobians(
    z: &SpaceTimeField,
    f: &Nonlinearity,
    quad_nodes: usize,
    grid: &SpatialGrid,
) -> Result<Jacobians> {
    if quad_nodes < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two quadrature nodes, got {quad_nodes}"
        )));
    }
    if z.slices.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::UnresolvedIterate);
    }
    let d = derivatives(z, grid, f.depends_on_gradient(), f.depends_on_hessian())?;
    let (tau, w) = gauss_legendre_unit(quad_nodes);
    let average = |field: &Vec<Vec<f64>>, deriv: &dyn Fn(f64) -> f64| -> Vec<Vec<f64>> {
        field
            .iter()
            .map(|slice| {
                slice
                    .iter()
                    .map(|x| tau.iter().zip(&w).map(|(t, wt)| wt * deriv(t * x)).sum())
                    .collect()
            })
            .collect()
    };
    Ok(Jacobians {
        g1: average(&d.value, &|u| f.d_u(u)),
        g2: d
            .gradient
            .iter()
            .map(|g| average(g, &|p| f.d_p(p)))
            .collect(),
        g3: d
            .hessian
            .iter()
            .map(|h| average(h, &|r| f.d_r(r)))
            .collect(),
    })
}

/// Pointwise `max |F(z,∇z,∇²z) − F(0,0,0) − (G1 z + G2·∇z + G3:∇²z)|`
/// relative to `max |F(z,∇z,∇²z) − F(0,0,0)|`.
pub fn mean_value_residual(
    z: &SpaceTimeField,
    f: &Nonlinearity,
    quad_nodes: usize,
    grid: &SpatialGrid,
) -> Result<f64> {
    let jac = averaged_jacobians(z, f, quad_nodes, grid)?;
    let dims = grid.dims();
    let d = derivatives(z, grid, true, true)?;
    let f0 = f.eval(0.0, &vec![0.0; dims], &vec![0.0; dims * dims]);
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for n in 0..z.slices.len() {
        for i in 0..grid.len() {
            let p: Vec<f64> = d.gradient.iter().map(|g| g[n][i]).collect();
            let r: Vec<f64> = d.hessian.iter().map(|h| h[n][i]).collect();
            let exact = f.eval(d.value[n][i], &p, &r) - f0;
            let mut linear = jac.g1[n][i] * d.value[n][i];
            for (k, g) in jac.g2.iter().enumerate() {
                linear += g[n][i] * p[k];
            }
            for (k, g) in jac.g3.iter().enumerate() {
                linear += g[n][i] * r[k];
            }
            num = num.max((exact - linear).abs());
            den = den.max(exact.abs());
        }
    }
    Ok(if den == 0.0 { num } else { num / den })
}

/// `L²(0,T)` of the modal `(1 + |ν_k|)²`-weighted spatial norm.
pub fn iteration_norm(z: &SpaceTimeField, grid: &SpatialGrid, time: &TimeGrid) -> f64 {
    let scale = grid.parseval_scale();
    let dt = time.dt();
    z.slices
        .iter()
        .enumerate()
        .map(|(n, slice)| {
            let modal = grid.analysis(slice);
            let s: f64 = modal
                .iter()
                .zip(grid.laplacian_eigenvalues())
                .map(|(c, nu)| (1.0 + nu.abs()).powi(2) * c * c)
                .sum();
            time.trapezoid_weight(n) * dt * scale * s
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub hum: HumConfig,
    /// Stop when `‖z_{k+1} − z_k‖ ≤ tol` in the iteration norm.
    pub tol: f64,
    pub max_iter: usize,
    pub quad_nodes: usize,
    /// Initial relaxation `θ` in `z_{k+1} = (1 − θ) z_k + θ Λ(z_k)`.
    pub damping: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            hum: HumConfig::default(),
            tol: 1e-10,
            max_iter: 50,
            quad_nodes: 8,
            damping: 1.0,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        self.hum.validate()?;
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "fixed-point tolerance and iteration cap must be positive".into(),
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub distance: f64,
    pub terminal_norm: f64,
    pub control_norm: f64,
    pub damping: f64,
    pub jacobian_sup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointTrace {
    pub rows: Vec<TraceRow>,
    pub converged: bool,
    pub tol: f64,
    /// Largest iterate norm seen.
    pub iterate_cap: f64,
    pub derivative_bound: f64,
    pub initial_l2_norm: f64,
    /// `None` for the state-only variant, which needs no `H²` data.
    pub initial_h2_norm: Option<f64>,
}

impl FixedPointTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.distance).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,distance,terminal_norm,control_norm\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                r.iter, r.distance, r.terminal_norm, r.control_norm
            ));
        }
        out
    }
}

/// Nonlinear control problem: coefficients, source and `χ_ω` of the
/// linear part come from `problem`.
pub struct SemilinearProblem<'a> {
    pub grid: &'a SpatialGrid,
    pub time: &'a TimeGrid,
    pub coefs: &'a CoefficientSet,
    pub weights: Option<&'a WeightBundle>,
    pub nonlinearity: Nonlinearity,
}

fn shifted(base: &Coefficient, g: &[Vec<f64>], len: usize, steps: usize) -> Coefficient {
    if g.is_empty() {
        return base.clone();
    }
    let mut values = Vec::with_capacity((steps + 1) * len);
    for (n, slice) in g.iter().enumerate() {
        match base.slice(n, len) {
            Some(b) => values.extend(b.iter().zip(slice).map(|(b, g)| b - g)),
            None => values.extend(slice.iter().map(|g| -g)),
        }
    }
    if values.iter().all(|v| *v == 0.0) && base.is_zero() {
        Coefficient::Zero
    } else {
        Coefficient::Sampled(values)
    }
}

fn linearized(
    base: &CoefficientSet,
    jac: &Jacobians,
    f0: f64,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> CoefficientSet {
    use crate::discretization::Source;
    let (len, steps) = (grid.len(), time.steps());
    let mut out = base.clone();
    out.a0 = shifted(&base.a0, &jac.g1, len, steps);
    for (k, g) in jac.g2.iter().enumerate() {
        out.b0[k] = shifted(&base.b0[k], g, len, steps);
    }
    for (k, g) in jac.g3.iter().enumerate() {
        out.d[k] = shifted(&base.d[k], g, len, steps);
    }
    if f0 != 0.0 {
        let add = |c: &Coefficient| -> Coefficient {
            match c {
                Coefficient::Zero => Coefficient::Uniform(f0),
                Coefficient::Uniform(v) => Coefficient::Uniform(v + f0),
                Coefficient::Static(v) => Coefficient::Static(v.iter().map(|x| x + f0).collect()),
                Coefficient::Sampled(v) => Coefficient::Sampled(v.iter().map(|x| x + f0).collect()),
            }
        };
        out.source = match &base.source {
            Source::None => Source::Plain(Coefficient::Uniform(f0)),
            Source::Plain(g) => Source::Plain(add(g)),
            Source::Divergence { g0, gi } => Source::Divergence {
                g0: add(g0),
                gi: gi.clone(),
            },
        };
    }
    out
}

fn h2_norm(y0: &[f64], grid: &SpatialGrid) -> f64 {
    let modal = grid.analysis(y0);
    let s: f64 = modal
        .iter()
        .zip(grid.laplacian_eigenvalues())
        .map(|(c, nu)| (1.0 + nu.abs()).powi(2) * c * c)
        .sum();
    (grid.parseval_scale() * s).sqrt()
}

fn run(
    y0: &[f64],
    problem: &SemilinearProblem<'_>,
    cfg: &FixedPointConfig,
    state_only: bool,
) -> Result<(HumResult, FixedPointTrace)> {
    cfg.validate()?;
    let f = problem.nonlinearity;
    f.validate()?;
    let (grid, time) = (problem.grid, problem.time);
    if y0.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: y0.len(),
        });
    }
    let dims = grid.dims();
    let bound = f.bound(dims);
    let f0 = f.eval(0.0, &vec![0.0; dims], &vec![0.0; dims * dims]);
    let mut trace = FixedPointTrace {
        rows: Vec::new(),
        converged: false,
        tol: cfg.tol,
        iterate_cap: 0.0,
        derivative_bound: bound,
        initial_l2_norm: grid.norm(y0),
        initial_h2_norm: if state_only {
            None
        } else {
            Some(h2_norm(y0, grid))
        },
    };
    let mut z = SpaceTimeField::zeros(
        crate::discretization::FieldRole::State,
        grid.len(),
        time.steps(),
    );
    let mut theta = cfg.damping;
    let mut increases = 0;
    let mut last: Option<HumResult> = None;
    for iter in 1..=cfg.max_iter {
        let jac = if state_only {
            let g = averaged_jacobians(&z, &Nonlinearity::Zero, cfg.quad_nodes, grid)?;
            let mut j = averaged_jacobians(&z, &f, cfg.quad_nodes, grid)?;
            j.g2 = g.g2;
            j.g3 = g.g3;
            j
        } else {
            averaged_jacobians(&z, &f, cfg.quad_nodes, grid)?
        };
        let jacobian_sup = jac.sup();
        if jacobian_sup > bound * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::InvalidParameter(format!(
                "averaged Jacobian {jacobian_sup:e} exceeds the derivative bound {bound:e}"
            )));
        }
        let coefs = linearized(problem.coefs, &jac, f0, grid, time);
        let result = hum_solve(
            y0,
            HumProblem {
                grid,
                time,
                coefs: &coefs,
                weights: problem.weights,
            },
            &cfg.hum,
        )?;
        let next = if theta == 1.0 {
            result.state.clone()
        } else {
            SpaceTimeField {
                role: z.role,
                slices: z
                    .slices
                    .iter()
                    .zip(&result.state.slices)
                    .map(|(a, b)| {
                        a.iter()
                            .zip(b)
                            .map(|(x, y)| (1.0 - theta) * x + theta * y)
                            .collect()
                    })
                    .collect(),
            }
        };
        let diff = SpaceTimeField {
            role: z.role,
            slices: next
                .slices
                .iter()
                .zip(&z.slices)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        };
        let distance = iteration_norm(&diff, grid, time);
        let size = iteration_norm(&next, grid, time);
        trace.iterate_cap = trace.iterate_cap.max(size);
        if let Some(prev) = trace.rows.last() {
            if distance > prev.distance {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        trace.rows.push(TraceRow {
            iter,
            distance,
            terminal_norm: result.terminal_norm,
            control_norm: result.control_norm,
            damping: theta,
            jacobian_sup,
        });
        if increases >= 2 && theta > 0.5 {
            theta = 0.5;
            increases = 0;
        }
        z = next;
        last = Some(result);
        if distance <= cfg.tol {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        let last_distance = trace.rows.last().map_or(f64::NAN, |r| r.distance);
        return Err(Error::NoConvergence {
            iterations: trace.rows.len(),
            last_distance,
            trace: Box::new(trace),
        });
    }
    Ok((last.expect("at least one iteration ran"), trace))
}

/// Picard iteration `z_{k+1} = Λ(z_k)` from `z_0 = 0`.
pub fn fixed_point_solve(
    y0: &[f64],
    problem: &SemilinearProblem<'_>,
    cfg: &FixedPointConfig,
) -> Result<(HumResult, FixedPointTrace)> {
    run(y0, problem, cfg, false)
}

/// The same pipeline for `F = G(y)`; no derivatives of the iterate are
/// formed, so `y0` needs no smoothness.
pub fn state_only_variant(
    y0: &[f64],
    g: ScalarNonlinearity,
    grid: &SpatialGrid,
    time: &TimeGrid,
    coefs: &CoefficientSet,
    weights: Option<&WeightBundle>,
    cfg: &FixedPointConfig,
) -> Result<(HumResult, FixedPointTrace)> {
    let problem = SemilinearProblem {
        grid,
        time,
        coefs,
        weights,
        nonlinearity: g.into(),
    };
    run(y0, &problem, cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn derivative_bound_holds_on_random_arguments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let list = [
            Nonlinearity::Linear { c: -0.7 },
            Nonlinearity::Sine { a: 0.3, b: 2.0 },
            Nonlinearity::Tanh { a: -1.5, b: 0.4 },
            Nonlinearity::Mixed {
                a: 0.2,
                b: 1.0,
                c: 0.1,
                d: 0.05,
            },
        ];
        for f in list {
            for dims in [1usize, 2] {
                let m = f.bound(dims);
                for _ in 0..10_000 {
                    let u: f64 = rng.gen_range(-20.0..20.0);
                    let p: Vec<f64> = (0..dims).map(|_| rng.gen_range(-20.0..20.0)).collect();
                    let r: Vec<f64> = (0..dims * dims)
                        .map(|_| rng.gen_range(-20.0..20.0))
                        .collect();
                    let total = f.d_u(u).abs()
                        + p.iter().map(|x| f.d_p(*x).abs()).sum::<f64>()
                        + r.iter().map(|x| f.d_r(*x).abs()).sum::<f64>();
                    assert!(total <= m * (1.0 + 1e-15), "{f:?}: {total} > {m}");
                }
            }
        }
    }

    #[test]
    fn zero_nonlinearity_has_zero_jacobians() {
        let grid = SpatialGrid::new(&[1.0], &[8]).unwrap();
        let mut z = SpaceTimeField::zeros(crate::discretization::FieldRole::State, 8, 3);
        z.slices[1][2] = 0.4;
        let j = averaged_jacobians(&z, &Nonlinearity::Zero, 8, &grid).unwrap();
        assert!(j.g1.iter().flatten().all(|v| *v == 0.0));
        assert!(j.g2.is_empty() && j.g3.is_empty());
    }

    #[test]
    fn linear_nonlinearity_has_constant_g1() {
        let grid = SpatialGrid::new(&[1.0], &[8]).unwrap();
        let mut z = SpaceTimeField::zeros(crate::discretization::FieldRole::State, 8, 3);
        z.slices[2][5] = -3.0;
        let j = averaged_jacobians(&z, &Nonlinearity::Linear { c: 0.25 }, 8, &grid).unwrap();
        for v in j.g1.iter().flatten() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn too_few_quadrature_nodes_rejected() {
        let grid = SpatialGrid::new(&[1.0], &[8]).unwrap();
        let z = SpaceTimeField::zeros(crate::discretization::FieldRole::State, 8, 3);
        assert!(averaged_jacobians(&z, &Nonlinearity::Zero, 1, &grid).is_err());
    }
}
