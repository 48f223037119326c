use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The state vector has (numerically) vanished and cannot be renormalized.
    #[error("state norm vanished at t = {time}")]
    ZeroNorm { time: f64 },

    /// `p_jump > 1`: the time step is too large for the detector decay rate.
    #[error("jump probability {probability} exceeds 1 at t = {time}; reduce dt")]
    ProbabilityOverflow { probability: f64, time: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach relative tolerance {tolerance:e} (estimated error {estimate:e})")]
    QuadratureFailure { tolerance: f64, estimate: f64 },

    #[error("root finder did not converge after {iterations} iterations (|residual| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("tolerance exceeded: {0}")]
    ToleranceExceeded(String),

    #[error("non-positive value {value} at t = {time} inside the fit window")]
    NonPositiveValues { time: f64, value: f64 },

    #[error("fit window ({t_lo}, {t_hi}) contains {found} points, need at least {needed}")]
    TooFewPoints {
        t_lo: f64,
        t_hi: f64,
        found: usize,
        needed: usize,
    },

    #[error("{failed} of {total} trajectories failed (first failure: {first})")]
    EnsembleFailure {
        failed: usize,
        total: usize,
        first: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
