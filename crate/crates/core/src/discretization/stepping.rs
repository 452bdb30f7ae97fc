//! Exponential-trapezoid time stepping and its exact transpose.
//!
//! In modal coordinates `ŷ' = −μ ŷ − K̂(t) ŷ + ŝ`. One step of length `h`:
//!
//! ```text
//! ŷ[n+1] = E (ŷ[n] + h/2 (ŝ[n] − K̂[n] ŷ[n])) + h/2 (ŝ[n+1] − K̂[n+1] (2ŷ[n] − ŷ[n−1]))
//! ```
//!
//! with `E = diag(exp(−μ h))` and `ŷ[−1] = ŷ[0]` on the first step. The
//! stiff part is integrated exactly, so free decay carries no time error.
//! The adjoint is the reverse sweep of this recurrence.

use crate::discretization::coefficients::{AdjointMode, CoefficientSet, FieldRole, SpaceTimeField};
use crate::discretization::grid::{SpatialGrid, TimeGrid};
use crate::discretization::operators::LowerOrder;
use crate::error::{Error, Result};

const INSTABILITY_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Apply the two-thirds rule to variable-coefficient products.
    pub dealias: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { dealias: true }
    }
}

/// The discrete evolution operator for one coefficient set.
pub struct Integrator<'a> {
    grid: &'a SpatialGrid,
    time: &'a TimeGrid,
    coefs: &'a CoefficientSet,
    decay: Vec<f64>,
    dealias: bool,
    active: bool,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

impl<'a> Integrator<'a> {
    pub fn new(
        grid: &'a SpatialGrid,
        time: &'a TimeGrid,
        coefs: &'a CoefficientSet,
        options: SolverOptions,
    ) -> Result<Self> {
        coefs.validate(grid, time)?;
        let h = time.dt();
        let decay = grid
            .biharmonic_eigenvalues()
            .iter()
            .map(|mu| (-mu * h).exp())
            .collect();
        Ok(Self {
            grid,
            time,
            coefs,
            decay,
            dealias: options.dealias,
            active: coefs.has_lower_order(),
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        self.time
    }

    fn lower(&self, n: usize) -> Option<LowerOrder<'a>> {
        if self.active {
            LowerOrder::at(self.grid, self.coefs, n, self.dealias)
        } else {
            None
        }
    }

    fn check(&self, step: usize, y: &[f64]) -> Result<()> {
        let norm = (self.grid.parseval_scale() * y.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if !norm.is_finite() || norm > INSTABILITY_THRESHOLD {
            return Err(Error::Instability { step, norm });
        }
        Ok(())
    }

    /// Marches modal data; `sources[n]` is the modal source at node `n`.
    pub fn march(&self, y0: Vec<f64>, sources: &[Option<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
        let steps = self.time.steps();
        debug_assert_eq!(sources.len(), steps + 1);
        let half = 0.5 * self.time.dt();
        let mut out = Vec::with_capacity(steps + 1);
        self.check(0, &y0)?;
        out.push(y0);
        let mut k_cur = self.lower(0);
        for n in 0..steps {
            let k_next = self.lower(n + 1);
            let y = &out[n];
            let mut inner = y.clone();
            if let Some(s) = &sources[n] {
                axpy(&mut inner, half, s);
            }
            if let Some(k) = &k_cur {
                axpy(&mut inner, -half, &k.apply(y));
            }
            let mut next: Vec<f64> = inner.iter().zip(&self.decay).map(|(v, e)| v * e).collect();
            if let Some(s) = &sources[n + 1] {
                axpy(&mut next, half, s);
            }
            if let Some(k) = &k_next {
                let ext: Vec<f64> = if n == 0 {
                    y.clone()
                } else {
                    y.iter()
                        .zip(&out[n - 1])
                        .map(|(a, b)| 2.0 * a - b)
                        .collect()
                };
                axpy(&mut next, -half, &k.apply(&ext));
            }
            self.check(n + 1, &next)?;
            out.push(next);
            k_cur = k_next;
        }
        Ok(out)
    }

    /// Reverse sweep of [`march`](Self::march).
    ///
    /// `seeds[n]` is the derivative of a linear functional with respect to
    /// `ŷ[n]`. Returns its derivatives with respect to every `ŝ[n]` and to `ŷ[0]`.
    pub fn march_transpose(&self, mut seeds: Vec<Vec<f64>>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let steps = self.time.steps();
        debug_assert_eq!(seeds.len(), steps + 1);
        let half = 0.5 * self.time.dt();
        let len = self.grid.len();
        let mut source_bar = vec![vec![0.0; len]; steps + 1];
        let mut k_next = self.lower(steps);
        for n in (0..steps).rev() {
            let k_cur = self.lower(n);
            let b = seeds[n + 1].clone();
            self.check(n + 1, &b)?;
            let a: Vec<f64> = b.iter().zip(&self.decay).map(|(v, e)| v * e).collect();
            axpy(&mut seeds[n], 1.0, &a);
            if let Some(k) = &k_cur {
                axpy(&mut seeds[n], -half, &k.apply_transpose(&a));
            }
            axpy(&mut source_bar[n], half, &a);
            axpy(&mut source_bar[n + 1], half, &b);
            if let Some(k) = &k_next {
                let e = k.apply_transpose(&b);
                if n >= 1 {
                    axpy(&mut seeds[n], -2.0 * half, &e);
                    axpy(&mut seeds[n - 1], half, &e);
                } else {
                    axpy(&mut seeds[0], -half, &e);
                }
            }
            k_next = k_cur;
        }
        self.check(0, &seeds[0])?;
        let y0_bar = seeds.swap_remove(0);
        Ok((source_bar, y0_bar))
    }

    /// Forward solve from nodal data; `sources[n]` nodal (or absent).
    pub fn forward_nodal(
        &self,
        y0: &[f64],
        sources: &[Option<Vec<f64>>],
    ) -> Result<SpaceTimeField> {
        let g = self.grid;
        let modal_sources: Vec<Option<Vec<f64>>> = sources
            .iter()
            .map(|s| s.as_ref().map(|v| g.analysis(v)))
            .collect();
        let modal = self.march(g.analysis(y0), &modal_sources)?;
        Ok(SpaceTimeField {
            role: FieldRole::State,
            slices: modal.iter().map(|m| g.synthesis(m)).collect(),
        })
    }

    /// Discrete adjoint with terminal datum `z_terminal` and adjoint source
    /// `g[n]` (nodal, optional).
    ///
    /// The returned `z` satisfies, for every source `f` and the forward
    /// solution `y` from `y0`:
    /// `(z, f)_Q + (ψ, y0) = (g, y)_Q + (z_terminal, y(T))`,
    /// where `ψ` is the returned initial gradient and `(·,·)_Q` is the
    /// trapezoid-in-time `L²` pairing.
    pub fn adjoint_nodal(
        &self,
        z_terminal: &[f64],
        sources: &[Option<Vec<f64>>],
    ) -> Result<AdjointSolution> {
        let g = self.grid;
        let steps = self.time.steps();
        let h = self.time.dt();
        let mut seeds: Vec<Vec<f64>> = sources
            .iter()
            .enumerate()
            .map(|(n, s)| match s {
                Some(v) => {
                    let w = self.time.trapezoid_weight(n) * h;
                    g.analysis(v).into_iter().map(|c| w * c).collect()
                }
                None => vec![0.0; g.len()],
            })
            .collect();
        axpy(&mut seeds[steps], 1.0, &g.analysis(z_terminal));
        let (source_bar, y0_bar) = self.march_transpose(seeds)?;
        let slices = source_bar
            .iter()
            .enumerate()
            .map(|(n, s)| {
                let w = 1.0 / (self.time.trapezoid_weight(n) * h);
                g.synthesis(&s.iter().map(|c| w * c).collect::<Vec<_>>())
            })
            .collect();
        Ok(AdjointSolution {
            z: SpaceTimeField {
                role: FieldRole::Adjoint,
                slices,
            },
            initial_gradient: g.synthesis(&y0_bar),
        })
    }

    /// Nodal source `g[n]` of the coefficient set at every node.
    pub fn coefficient_sources(&self) -> Vec<Option<Vec<f64>>> {
        (0..=self.time.steps())
            .map(|n| self.coefs.source_at(self.grid, n))
            .collect()
    }
}

/// Output of a discrete adjoint solve.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub z: SpaceTimeField,
    /// Representer of the functional's dependence on the initial state.
    pub initial_gradient: Vec<f64>,
}

fn control_sources(
    grid: &SpatialGrid,
    time: &TimeGrid,
    coefs: &CoefficientSet,
    control: Option<&SpaceTimeField>,
) -> Result<Vec<Option<Vec<f64>>>> {
    if let Some(v) = control {
        if v.slices.len() != time.steps() + 1 {
            return Err(Error::ShapeMismatch {
                expected: time.steps() + 1,
                found: v.slices.len(),
            });
        }
    }
    Ok((0..=time.steps())
        .map(|n| {
            let g = coefs.source_at(grid, n);
            let cv = control.map(|v| {
                v.slices[n]
                    .iter()
                    .zip(&coefs.control_mask)
                    .map(|(a, m)| a * m)
                    .collect::<Vec<f64>>()
            });
            match (g, cv) {
                (None, None) => None,
                (Some(a), None) | (None, Some(a)) => Some(a),
                (Some(mut a), Some(b)) => {
                    axpy(&mut a, 1.0, &b);
                    Some(a)
                }
            }
        })
        .collect())
}

/// Solves `y_t + Δ²y + K y = χ_ω v + g`, `y(0) = y0`.
pub fn solve_forward(
    y0: &[f64],
    control: Option<&SpaceTimeField>,
    coefs: &CoefficientSet,
    grid: &SpatialGrid,
    time: &TimeGrid,
    options: SolverOptions,
) -> Result<SpaceTimeField> {
    if y0.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: y0.len(),
        });
    }
    let integrator = Integrator::new(grid, time, coefs, options)?;
    let sources = control_sources(grid, time, coefs, control)?;
    integrator.forward_nodal(y0, &sources)
}

/// Backward adjoint solve from `z(T) = z_terminal` with the coefficient
/// set's source as right-hand side; `mode` selects the retained terms.
pub fn solve_adjoint_detailed(
    z_terminal: &[f64],
    coefs: &CoefficientSet,
    mode: AdjointMode,
    grid: &SpatialGrid,
    time: &TimeGrid,
    options: SolverOptions,
) -> Result<AdjointSolution> {
    if z_terminal.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: z_terminal.len(),
        });
    }
    let restricted = coefs.restricted(mode);
    let integrator = Integrator::new(grid, time, &restricted, options)?;
    let sources = integrator.coefficient_sources();
    integrator.adjoint_nodal(z_terminal, &sources)
}

/// Backward trajectory for pointwise use.
///
/// Slice 0 of the discrete transpose is a half-weight quadrature
/// representer and only first-order accurate as a value of `z(0)`; it is
/// replaced by the initial gradient, which is second order.
pub fn solve_adjoint(
    z_terminal: &[f64],
    coefs: &CoefficientSet,
    mode: AdjointMode,
    grid: &SpatialGrid,
    time: &TimeGrid,
    options: SolverOptions,
) -> Result<SpaceTimeField> {
    let AdjointSolution {
        mut z,
        initial_gradient,
    } = solve_adjoint_detailed(z_terminal, coefs, mode, grid, time, options)?;
    z.slices[0] = initial_gradient;
    Ok(z)
}
