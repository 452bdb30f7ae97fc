use crate::discretization::coefficients::{AdjointMode, CoefficientSet, FieldRole, SpaceTimeField};
use crate::discretization::grid::{SpatialGrid, TimeGrid};
use crate::discretization::operators::LowerOrder;
use crate::discretization::stepping::{Integrator, SolverOptions};
use crate::error::{Error, Result};

/// A forward trajectory together with the right-hand side that produced it.
#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub source: SpaceTimeField,
    pub state: SpaceTimeField,
}

/// A backward trajectory with its terminal datum and adjoint source.
#[derive(Debug, Clone)]
pub struct AdjointRun {
    pub terminal: Vec<f64>,
    pub source: SpaceTimeField,
    pub z: SpaceTimeField,
}

/// Forward solve with `w(0) = 0` and nodal source `f`, keeping the terms of `mode`.
pub fn run_forward(
    source: SpaceTimeField,
    coefs: &CoefficientSet,
    mode: AdjointMode,
    grid: &SpatialGrid,
    time: &TimeGrid,
    options: SolverOptions,
) -> Result<ForwardRun> {
    let restricted = coefs.restricted(mode).without_source();
    let integ = Integrator::new(grid, time, &restricted, options)?;
    let sources: Vec<Option<Vec<f64>>> = source.slices.iter().cloned().map(Some).collect();
    let state = integ.forward_nodal(&vec![0.0; grid.len()], &sources)?;
    Ok(ForwardRun { source, state })
}

/// Backward solve from `terminal` with adjoint source `g`, keeping the terms of `mode`.
pub fn run_adjoint(
    terminal: Vec<f64>,
    source: SpaceTimeField,
    coefs: &CoefficientSet,
    mode: AdjointMode,
    grid: &SpatialGrid,
    time: &TimeGrid,
    options: SolverOptions,
) -> Result<AdjointRun> {
    let restricted = coefs.restricted(mode).without_source();
    let integ = Integrator::new(grid, time, &restricted, options)?;
    let sources: Vec<Option<Vec<f64>>> = source.slices.iter().cloned().map(Some).collect();
    let z = integ.adjoint_nodal(&terminal, &sources)?.z;
    Ok(AdjointRun {
        terminal,
        source,
        z,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DualityResidual {
    pub absolute: f64,
    /// Sum of the products of field norms entering the identity.
    pub scale: f64,
    pub relative: f64,
}

/// Residual of the transposition identity
/// `(z, Lw)_Q = ∫_Q (g w − D:∇²w z − a1 z Δw) + (z0, w(T))`
/// with `Lw = w_t + Δ²w` recovered from the forward equation.
pub fn duality_check(
    w: &ForwardRun,
    z: &AdjointRun,
    coefs: &CoefficientSet,
    grid: &SpatialGrid,
    time: &TimeGrid,
    options: SolverOptions,
) -> Result<DualityResidual> {
    let steps = time.steps();
    for f in [&w.source, &w.state, &z.source, &z.z] {
        if f.slices.len() != steps + 1 || f.slices.iter().any(|s| s.len() != grid.len()) {
            return Err(Error::ShapeMismatch {
                expected: (steps + 1) * grid.len(),
                found: f.slices.iter().map(Vec::len).sum(),
            });
        }
    }
    let restricted = coefs.restricted(AdjointMode::Transposition);
    let mut lw = SpaceTimeField::zeros(FieldRole::Source, grid.len(), steps);
    let mut couple = SpaceTimeField::zeros(FieldRole::Source, grid.len(), steps);
    for n in 0..=steps {
        let k = LowerOrder::at(grid, &restricted, n, options.dealias)
            .map(|op| grid.synthesis(&op.apply(&grid.analysis(&w.state.slices[n]))))
            .unwrap_or_else(|| vec![0.0; grid.len()]);
        lw.slices[n] = w.source.slices[n]
            .iter()
            .zip(&k)
            .map(|(f, k)| f - k)
            .collect();
        couple.slices[n] = k;
    }
    let lhs = z.z.inner(&lw, grid, time);
    let rhs = z.source.inner(&w.state, grid, time) - z.z.inner(&couple, grid, time)
        + grid.inner(&z.terminal, w.state.terminal());
    let absolute = (lhs - rhs).abs();
    let scale = z.z.norm(grid, time) * lw.norm(grid, time)
        + z.source.norm(grid, time) * w.state.norm(grid, time)
        + z.z.norm(grid, time) * couple.norm(grid, time)
        + grid.norm(&z.terminal) * grid.norm(w.state.terminal());
    let relative = if scale > 0.0 {
        absolute / scale
    } else {
        absolute
    };
    Ok(DualityResidual {
        absolute,
        scale,
        relative,
    })
}
