//! Brownian motion and geodesic flow on quotients of PSL(2,R) by modular
//! groups, with winding functionals and their limit-law checks.

pub mod brownian;
pub mod forms;
pub mod geodesic;
pub mod hyperbolic_core;
pub mod modular_group;
pub mod rng;
pub mod stats;

pub use num_complex::Complex64;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CoreError {
    #[error("non-finite input")]
    NonFinite,
    #[error("point is not in the upper half-plane")]
    OutsideHalfPlane,
    #[error("metric parameter a must be finite and nonzero")]
    DegenerateMetric,
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("invalid group data: {0}")]
    InvalidGroup(String),
    #[error("unknown form `{0}`")]
    UnknownForm(String),
    #[error("invalid form: {0}")]
    InvalidForm(String),
    #[error("tangent vector is not unit length (norm^2 = {0})")]
    NotUnit(f64),
    #[error("leaf parameter |k| must be < 1, got {0}")]
    LeafParameter(f64),
    #[error("statistics: {0}")]
    Stats(String),
}
