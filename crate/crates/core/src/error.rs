use thiserror::Error;

/// Errors produced by grid construction, field validation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid datum: {0}")]
    InvalidDatum(String),

    #[error("characteristic Jacobian degenerate: min q_s = {min_qs:.3e} at t = {t:.6}")]
    JacobianDegenerate { min_qs: f64, t: f64 },

    #[error("time step {dt} rejected: {reason}")]
    StepSize { dt: f64, reason: String },

    #[error("boundary decay violated: |u| = {value:.3e} at x = {x:.3} exceeds {tol:.1e}")]
    BoundaryDecay { x: f64, value: f64, tol: f64 },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
