//! Sine-spectral Galerkin discretization of the state and adjoint equations.

mod coefficients;
mod duality;
pub mod export;
mod grid;
mod operators;
mod stepping;

pub use coefficients::{
    AdjointMode, Coefficient, CoefficientSet, FieldRole, Source, SpaceTimeField,
};
pub use duality::{
    duality_check, run_adjoint, run_forward, AdjointRun, DualityResidual, ForwardRun,
};
pub use grid::{SpatialGrid, TimeGrid};
pub use operators::{apply_forward_operator, LowerOrder};
pub use stepping::{
    solve_adjoint, solve_adjoint_detailed, solve_forward, AdjointSolution, Integrator,
    SolverOptions,
};
