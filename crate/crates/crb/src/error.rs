use thiserror::Error;

/// Errors surfaced by model construction, generators, quadrature and
/// linear algebra. The CLI maps these to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its mathematical domain (e.g. `sigma2 <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// An observation lies outside the support of the density.
    #[error("support error: {0}")]
    Support(String),

    /// Model-level inconsistency: dimension mismatch, non-PD covariance, ...
    #[error("model error: {0}")]
    Model(String),

    /// A distributional constraint is violated (e.g. `E[tau] != 1`).
    #[error("constraint error: {0}")]
    Constraint(String),

    /// Quadrature or iteration failed to reach the requested tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A matrix block that must be inverted is (numerically) singular.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),
}

pub type Result<T> = std::result::Result<T, Error>;
