//! Weighted-integral audits of the Carleman inequalities and the weighted
//! extremal problem behind the observability bound.

mod audit;
mod extremal;
mod sweep;

pub use audit::{
    audit_lemma22, audit_theorem322, evaluate_lemma, evaluate_theorem, AuditKind, CarlemanReport,
    WeightedTerm,
};
pub use extremal::{
    solve_dual_extremal, DualExtremalResult, ExtremalConfig, ExtremalSolver, RIDGE,
};
pub use sweep::{
    constant_sweep, default_s_values, AuditSubject, LambdaConstant, SweepEntry, SweepTable,
    DEFAULT_LAMBDAS, DEFAULT_S0, FLAG_FACTOR,
};
