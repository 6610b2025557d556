use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("radius {radius} exceeds the grid half-width {half_width}")]
    RadiusOutsideGrid { radius: f64, half_width: f64 },
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("kernel evaluated at the singular point z = 0")]
    SingularPoint,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("eigen-solve failed: {0}")]
    EigenFailure(String),
    #[error("function vanishes at node {index} (|phi| = {value:e})")]
    VanishingDenominator { index: usize, value: f64 },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("y-integral tail {tail:e} exceeds the budget {budget:e}")]
    TailBudget { tail: f64, budget: f64 },
    #[error("need at least {needed} radii, got {got}")]
    TooFewRadii { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_param(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}
