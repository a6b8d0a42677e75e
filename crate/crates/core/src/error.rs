use thiserror::Error;

/// Errors raised by the numerical and statistical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("integration did not converge (estimate {estimate:e}, error {error:e})")]
    Convergence { estimate: f64, error: f64 },

    #[error("root is not bracketed: f({lo}) = {f_lo:e}, f({hi}) = {f_hi:e}")]
    Bracketing {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("Weibull fit failed: {reason} (b*E[B^2]/E[B]^2 = {moment_ratio})")]
    Fit { reason: String, moment_ratio: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Best available estimate carried by a convergence failure.
    pub fn best_estimate(&self) -> Option<f64> {
        match self {
            Error::Convergence { estimate, .. } => Some(*estimate),
            _ => None,
        }
    }
}
