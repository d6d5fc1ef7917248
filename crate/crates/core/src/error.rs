//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A point (or a product of points) left the chart's validity domain.
    #[error("out of chart domain: {0}")]
    OutOfChart(String),

    /// Invalid construction parameters (dimensions, signs, norms).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A finite-difference probe produced non-finite values.
    #[error("numerical derivative failure: {0}")]
    NumericalDerivative(String),

    /// A sampler failed to produce enough in-domain points.
    #[error("sampler exhausted after {attempts} attempts ({accepted}/{requested} in-domain points)")]
    SamplerExhausted {
        attempts: usize,
        accepted: usize,
        requested: usize,
    },

    /// The Newton Jacobian is numerically singular.
    #[error("singular Jacobian: condition number {condition:.3e} exceeds {limit:.1e}")]
    SingularJacobian { condition: f64, limit: f64 },

    /// Newton iteration stalled or ran out of iterations. Carries the best
    /// iterate seen so the caller can inspect or restart.
    #[error("Newton iteration failed after {iterations} iterations: residual {residual:.3e} > tolerance {tolerance:.1e}")]
    NewtonDiverged {
        iterations: usize,
        residual: f64,
        tolerance: f64,
        best_iterate: Vec<f64>,
    },

    /// An anchored step's increment left the chart; re-anchoring cannot help.
    #[error("step size too large for chart: {0}")]
    StepTooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
