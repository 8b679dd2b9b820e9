use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported ensemble: {0}")]
    Unsupported(String),
    #[error("below BP threshold: no nontrivial BP fixed point")]
    BelowBpThreshold,
    #[error("above MAP threshold: energy gap is not positive ({gap:e})")]
    AboveMapThreshold { gap: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("approximation scheme breaks down: radicand {radicand:e} at x = {at}")]
    ApproximationBreakdown { at: f64, radicand: f64 },
    #[error("wave reached boundary before the measurement window")]
    WaveReachedBoundary,
    #[error("no travelling front in trajectory")]
    NoFront,
    #[error("degenerate profile: velocity denominator {0:e}")]
    DegenerateProfile(f64),
    #[error("denominator sign violation: {0:e}")]
    DenominatorSign(f64),
    #[error("grid mismatch")]
    GridMismatch,
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Solver,
    Regime,
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Unsupported(_) => "unsupported",
            Error::BelowBpThreshold => "below-BP",
            Error::AboveMapThreshold { .. } => "above-MAP",
            Error::NoConvergence { .. } => "no-convergence",
            Error::ApproximationBreakdown { .. } => "approximation-breakdown",
            Error::WaveReachedBoundary => "wave-reached-boundary",
            Error::NoFront => "no-front",
            Error::DegenerateProfile(_) => "degenerate-profile",
            Error::DenominatorSign(_) => "denominator-sign",
            Error::GridMismatch => "grid-mismatch",
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Unsupported(_) | Error::GridMismatch => {
                ErrorKind::Config
            }
            Error::BelowBpThreshold | Error::AboveMapThreshold { .. } => ErrorKind::Regime,
            _ => ErrorKind::Solver,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
