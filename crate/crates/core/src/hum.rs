//! Penalized HUM: minimize `(1/2ε)‖y(T)‖² + (1/2)‖v‖²_{L²(Q_ω)}`.
//!
//! The optimality system reduces to the terminal-datum equation
//! `(Λ + ε) z_T = y_free(T)`, where `Λ z_T = w(T)` for `w` driven by
//! `χ_ω p` and `p` the adjoint started from `z_T`. Then `v = −χ_ω p`
//! and `y(T) = ε z_T`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cg::{conjugate_gradient, CgOptions};
use crate::discretization::{
    AdjointMode, CoefficientSet, FieldRole, Integrator, SolverOptions, SpaceTimeField, SpatialGrid,
    TimeGrid,
};
use crate::error::{Error, Result};
use crate::quadrature::{fit_slope, log_sq, LogSum};
use crate::weights::WeightBundle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumConfig {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Modal diagonal preconditioner built from the uncoupled Gramian.
    pub precondition: bool,
    pub solver: SolverOptions,
}

impl Default for HumConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            tol: 1e-8,
            max_iter: 500,
            precondition: false,
            solver: SolverOptions::default(),
        }
    }
}

impl HumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "CG tolerance must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "CG needs at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

/// Grids, coefficients (source `g` and `χ_ω` included) and optional weights.
#[derive(Clone, Copy)]
pub struct HumProblem<'a> {
    pub grid: &'a SpatialGrid,
    pub time: &'a TimeGrid,
    pub coefs: &'a CoefficientSet,
    /// Used only for the weighted source norm in reports.
    pub weights: Option<&'a WeightBundle>,
}

#[derive(Debug, Clone)]
pub struct HumResult {
    pub epsilon: f64,
    pub control: SpaceTimeField,
    pub state: SpaceTimeField,
    pub adjoint: SpaceTimeField,
    pub terminal_datum: Vec<f64>,
    pub free_terminal: Vec<f64>,
    pub terminal_norm: f64,
    pub control_norm: f64,
    pub cost: f64,
    pub cg_iterations: usize,
    pub residual_history: Vec<f64>,
    /// `‖(Λ + ε) z_T − y_free(T)‖ / ‖y_free(T)‖`, freshly recomputed.
    pub optimality_residual: f64,
    /// `‖ξ̃^{-3} e^{−sα̃} g‖_{L²(Q)}`, when weights were supplied.
    pub weighted_source_norm: Option<f64>,
    pub initial_norm: f64,
}

impl HumResult {
    /// `[(1/ε)‖y(T)‖² + ‖v‖²] / (‖ξ̃^{-3}e^{−sα̃}g‖² + ‖y0‖²)`.
    pub fn bound_quotient(&self) -> f64 {
        let num = self.terminal_norm.powi(2) / self.epsilon + self.control_norm.powi(2);
        let den = self.weighted_source_norm.unwrap_or(0.0).powi(2) + self.initial_norm.powi(2);
        if den == 0.0 {
            if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            num / den
        }
    }
}

/// Uncontrolled trajectory from `y0` with the problem's source.
pub fn free_trajectory(
    y0: &[f64],
    coefs: &CoefficientSet,
    grid: &SpatialGrid,
    time: &TimeGrid,
    solver: SolverOptions,
) -> Result<SpaceTimeField> {
    crate::discretization::solve_forward(y0, None, coefs, grid, time, solver)
}

/// The control operator, its adjoint and the Gramian for one coefficient set.
pub struct ControlMap<'a> {
    grid: &'a SpatialGrid,
    time: &'a TimeGrid,
    mask: &'a [f64],
    integrator: Integrator<'a>,
}

impl<'a> ControlMap<'a> {
    /// `coefs` must already be free of sources.
    pub fn new(
        grid: &'a SpatialGrid,
        time: &'a TimeGrid,
        coefs: &'a CoefficientSet,
        solver: SolverOptions,
    ) -> Result<Self> {
        Ok(Self {
            grid,
            time,
            mask: &coefs.control_mask,
            integrator: Integrator::new(grid, time, coefs, solver)?,
        })
    }

    /// Full adjoint `p` from `p(T) = z_T` with no source.
    pub fn adjoint(&self, z_terminal: &[f64]) -> Result<SpaceTimeField> {
        let none = vec![None; self.time.steps() + 1];
        Ok(self.integrator.adjoint_nodal(z_terminal, &none)?.z)
    }

    /// `w(T)` for `w(0) = 0` driven by `χ_ω p`.
    pub fn terminal_of(&self, p: &SpaceTimeField) -> Result<Vec<f64>> {
        let sources: Vec<Option<Vec<f64>>> = p
            .slices
            .iter()
            .map(|s| Some(s.iter().zip(self.mask).map(|(a, m)| a * m).collect()))
            .collect();
        let w = self
            .integrator
            .forward_nodal(&vec![0.0; self.grid.len()], &sources)?;
        Ok(w.terminal().to_vec())
    }

    pub fn gramian(&self, z_terminal: &[f64]) -> Result<Vec<f64>> {
        self.terminal_of(&self.adjoint(z_terminal)?)
    }
}

/// `Λ_h z_T`.
pub fn gramian_apply(
    z_terminal: &[f64],
    coefs: &CoefficientSet,
    grid: &SpatialGrid,
    time: &TimeGrid,
    solver: SolverOptions,
) -> Result<Vec<f64>> {
    let unsourced = coefs.restricted(AdjointMode::Full).without_source();
    ControlMap::new(grid, time, &unsourced, solver)?.gramian(z_terminal)
}

fn modal_preconditioner(grid: &SpatialGrid, time: &TimeGrid, mask: &[f64]) -> Vec<f64> {
    let fraction = mask.iter().sum::<f64>() / mask.len() as f64;
    grid.biharmonic_eigenvalues()
        .iter()
        .map(|mu| {
            let x = 2.0 * mu * time.horizon();
            let g = if x < 1e-8 {
                time.horizon()
            } else {
                -(-x).exp_m1() / (2.0 * mu)
            };
            fraction * g
        })
        .collect()
}

/// `‖ξ̃^{-3} e^{−sα̃} g‖_{L²(Q)}` over the midpoint grid, in log space.
pub fn weighted_source_norm(
    coefs: &CoefficientSet,
    weights: &WeightBundle,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> Result<f64> {
    if weights.times().len() != time.steps() || weights.nodes() != grid.closed_len() {
        return Err(Error::ShapeMismatch {
            expected: time.steps() * grid.closed_len(),
            found: weights.times().len() * weights.nodes(),
        });
    }
    let mut acc = LogSum::new();
    let hx = grid.cell_volume();
    let tw = time.midpoint_weights();
    let slices: Vec<Option<Vec<f64>>> = (0..=time.steps())
        .map(|n| coefs.source_at(grid, n))
        .collect();
    for m in 0..time.steps() {
        let (a, b) = (&slices[m], &slices[m + 1]);
        if a.is_none() && b.is_none() {
            continue;
        }
        let t = weights.times()[m];
        for i in 0..grid.len() {
            let g = 0.5 * (a.as_ref().map_or(0.0, |v| v[i]) + b.as_ref().map_or(0.0, |v| v[i]));
            let node = grid.closed_index_of(i);
            let log_term = log_sq(g)
                - 6.0 * weights.log_xi_tilde_at(node, t)
                - 2.0 * weights.s() * weights.alpha_tilde_at(node, t)
                + (tw[m] * hx).ln();
            acc.add_log(log_term);
        }
    }
    Ok((0.5 * acc.log()).exp())
}

/// Solves the penalized problem from `y0`.
pub fn hum_solve(y0: &[f64], problem: HumProblem<'_>, cfg: &HumConfig) -> Result<HumResult> {
    cfg.validate()?;
    let HumProblem {
        grid,
        time,
        coefs,
        weights,
    } = problem;
    if y0.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: y0.len(),
        });
    }
    let free = free_trajectory(y0, coefs, grid, time, cfg.solver)?;
    let free_terminal = free.terminal().to_vec();
    let unsourced = coefs.without_source();
    let map = ControlMap::new(grid, time, &unsourced, cfg.solver)?;
    let eps = cfg.epsilon;
    let inner = |a: &[f64], b: &[f64]| grid.inner(a, b);
    let diag = modal_preconditioner(grid, time, &coefs.control_mask);
    let precond = |r: &[f64]| -> Vec<f64> {
        let modal = grid.analysis(r);
        let scaled: Vec<f64> = modal
            .iter()
            .zip(&diag)
            .map(|(c, d)| c / (d + eps))
            .collect();
        grid.synthesis(&scaled)
    };
    let apply = |z: &[f64]| -> Result<Vec<f64>> {
        let mut out = map.gramian(z)?;
        for (o, zi) in out.iter_mut().zip(z) {
            *o += eps * zi;
        }
        Ok(out)
    };
    let cg_opts = CgOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    let outcome = if cfg.precondition {
        conjugate_gradient(apply, &free_terminal, inner, Some(precond), cg_opts)?
    } else {
        conjugate_gradient(
            apply,
            &free_terminal,
            inner,
            None::<fn(&[f64]) -> Vec<f64>>,
            cg_opts,
        )?
    };
    let z_terminal = outcome.solution;
    let adjoint = map.adjoint(&z_terminal)?;
    let control = adjoint
        .masked(FieldRole::Control, &coefs.control_mask)
        .map(FieldRole::Control, |v| -v);
    let state =
        crate::discretization::solve_forward(y0, Some(&control), coefs, grid, time, cfg.solver)?;
    let free_norm = grid.norm(&free_terminal);
    let optimality_residual = if free_norm == 0.0 {
        grid.norm(&z_terminal)
    } else {
        let lz = map.terminal_of(&adjoint)?;
        let r: Vec<f64> = lz
            .iter()
            .zip(&z_terminal)
            .zip(&free_terminal)
            .map(|((l, z), f)| l + eps * z - f)
            .collect();
        grid.norm(&r) / free_norm
    };
    let terminal_norm = grid.norm(state.terminal());
    let control_norm = control.norm(grid, time);
    let cost = terminal_norm.powi(2) / (2.0 * eps) + 0.5 * control_norm.powi(2);
    let weighted_source_norm = match weights {
        Some(w) => Some(weighted_source_norm(coefs, w, grid, time)?),
        None => None,
    };
    Ok(HumResult {
        epsilon: eps,
        control,
        state,
        adjoint,
        terminal_datum: z_terminal,
        free_terminal,
        terminal_norm,
        control_norm,
        cost,
        cg_iterations: outcome.iterations,
        residual_history: outcome.history,
        optimality_residual,
        weighted_source_norm,
        initial_norm: grid.norm(y0),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub terminal_norm: f64,
    pub control_norm: f64,
    pub cost: f64,
    pub cg_iters: usize,
    pub bound_quotient: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log ‖y_ε(T)‖` against `log ε`.
    pub decay_exponent: f64,
    /// `K` fitted on the first two points of `‖y_ε(T)‖ ≤ K √ε`.
    pub sqrt_constant: f64,
    pub sqrt_law_holds: bool,
    /// `max/min ‖v_ε‖` over the last three penalties.
    pub control_ratio: f64,
    pub control_bounded: bool,
    /// `max/min` of the bound quotient across the sweep.
    pub quotient_variation: f64,
    pub terminal_monotone: bool,
    pub cost_monotone: bool,
}

impl SweepReport {
    pub fn from_results(results: &[HumResult]) -> Self {
        let rows: Vec<SweepRow> = results
            .iter()
            .map(|r| SweepRow {
                epsilon: r.epsilon,
                terminal_norm: r.terminal_norm,
                control_norm: r.control_norm,
                cost: r.cost,
                cg_iters: r.cg_iterations,
                bound_quotient: r.bound_quotient(),
            })
            .collect();
        let positive: Vec<&SweepRow> = rows.iter().filter(|r| r.terminal_norm > 0.0).collect();
        let decay_exponent = if positive.len() >= 2 {
            let xs: Vec<f64> = positive.iter().map(|r| r.epsilon.ln()).collect();
            let ys: Vec<f64> = positive.iter().map(|r| r.terminal_norm.ln()).collect();
            fit_slope(&xs, &ys)
        } else {
            0.0
        };
        let sqrt_constant = rows
            .iter()
            .take(2)
            .map(|r| r.terminal_norm / r.epsilon.sqrt())
            .fold(0.0f64, f64::max);
        let sqrt_law_holds = rows
            .iter()
            .all(|r| r.terminal_norm <= sqrt_constant * r.epsilon.sqrt() * (1.0 + 1e-9));
        let tail: Vec<f64> = rows.iter().rev().take(3).map(|r| r.control_norm).collect();
        let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
        let control_ratio = if hi == 0.0 { 1.0 } else { hi / lo };
        let (qlo, qhi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
            (lo.min(r.bound_quotient), hi.max(r.bound_quotient))
        });
        let quotient_variation = if qhi == 0.0 { 1.0 } else { qhi / qlo };
        let terminal_monotone = rows
            .windows(2)
            .all(|w| w[1].terminal_norm <= w[0].terminal_norm * (1.0 + 1e-9));
        let cost_monotone = rows
            .windows(2)
            .all(|w| w[1].cost >= w[0].cost * (1.0 - 1e-9));
        Self {
            rows,
            decay_exponent,
            sqrt_constant,
            sqrt_law_holds,
            control_ratio,
            control_bounded: control_ratio <= 2.0,
            quotient_variation,
            terminal_monotone,
            cost_monotone,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("epsilon,terminal_norm,control_norm,cost,cg_iters,bound_quotient\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{},{:e}\n",
                r.epsilon, r.terminal_norm, r.control_norm, r.cost, r.cg_iters, r.bound_quotient
            ));
        }
        out
    }
}

fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "epsilon sweep needs at least 4 values, got {}",
            epsilons.len()
        )));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter(
            "epsilon list must be positive and strictly decreasing".into(),
        ));
    }
    if epsilons[0] / epsilons[epsilons.len() - 1] < 1e3 * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(
            "epsilon list must span at least three decades".into(),
        ));
    }
    Ok(())
}

/// One HUM solve per penalty, ordered by decreasing `ε`.
pub fn sweep_points(
    y0: &[f64],
    problem: HumProblem<'_>,
    template: &HumConfig,
    epsilons: &[f64],
    parallel: bool,
) -> Result<Vec<HumResult>> {
    let solve = |eps: &f64| {
        let cfg = HumConfig {
            epsilon: *eps,
            ..*template
        };
        hum_solve(y0, problem, &cfg)
    };
    let mut results: Vec<HumResult> = if parallel {
        epsilons.par_iter().map(solve).collect::<Result<_>>()?
    } else {
        epsilons.iter().map(solve).collect::<Result<_>>()?
    };
    results.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    Ok(results)
}

/// Runs the sweep and evaluates the limit diagnostics.
pub fn epsilon_sweep(
    y0: &[f64],
    problem: HumProblem<'_>,
    template: &HumConfig,
    epsilons: &[f64],
    parallel: bool,
) -> Result<(SweepReport, Vec<HumResult>)> {
    check_epsilons(epsilons)?;
    let results = sweep_points(y0, problem, template, epsilons, parallel)?;
    let report = SweepReport::from_results(&results);
    if !report.control_bounded {
        return Err(Error::SweepDivergence {
            ratio: report.control_ratio,
        });
    }
    Ok((report, results))
}
