use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error(
        "eta construction infeasible: critical point {center:?} is not inside the inner region"
    )]
    ConstructionInfeasible { center: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight overflow: {what} is not representable at lambda={lambda}")]
    WeightOverflow { what: &'static str, lambda: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("time stepping unstable at step {step}: slice norm {norm:e} exceeds 1e12")]
    Instability { step: usize, norm: f64 },

    #[error("conjugate gradient stagnated after {iterations} iterations (relative residual {relative_residual:e})")]
    CgStagnation {
        iterations: usize,
        relative_residual: f64,
        best_iterate: Vec<f64>,
    },

    #[error("epsilon sweep diverged: control norm ratio {ratio} over the last three penalties exceeds 2")]
    SweepDivergence { ratio: f64 },

    #[error("degenerate adjoint solution: L2(Q) norm {norm:e} below 1e-30")]
    DegenerateSolution { norm: f64 },

    #[error("coupled extremal solve stalled after {iterations} iterations (relative residual {relative_residual:e})")]
    CoupledSolveDivergence {
        iterations: usize,
        relative_residual: f64,
    },

    #[error("iterate is not resolved on the grid: non-finite second derivatives")]
    UnresolvedIterate,

    #[error("fixed-point iteration did not converge in {iterations} iterations (last distance {last_distance:e})")]
    NoConvergence {
        iterations: usize,
        last_distance: f64,
        trace: Box<crate::semilinear::FixedPointTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
