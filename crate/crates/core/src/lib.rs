//! Null controls and Carleman-weight audits for fourth-order parabolic
//! equations `y_t + Δ²y + a0 y + B0·∇y + D:∇²y + a1 Δy = χ_ω v + g` on
//! boxes with Navier boundary conditions.

pub mod carleman;
pub mod cg;
pub mod cli;
pub mod discretization;
pub mod error;
pub mod hum;
pub mod quadrature;
pub mod semilinear;
pub mod weights;

pub use error::{Error, Result};
