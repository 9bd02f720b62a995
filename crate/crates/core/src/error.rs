use thiserror::Error;

/// Errors raised by the numeric kernel, the plant model, tuning and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("matrix is not Hurwitz (max real part of eigenvalues = {max_real_part:.3e})")]
    NotHurwitz { max_real_part: f64 },

    #[error("integration fault at t = {t}: {reason}")]
    IntegrationFault { t: f64, reason: String },

    #[error("time regression in sliding window: pushed t = {t} after t = {last}")]
    Ordering { t: f64, last: f64 },

    #[error("signal queried at t = {t} outside recorded range [{start}, {end}]")]
    Extrapolation { t: f64, start: f64, end: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("control authority margin violated: {0}")]
    ControlAuthority(String),

    #[error("infeasible gain: {0}")]
    InfeasibleGain(String),

    #[error("infeasible problem: {0}")]
    InfeasibleProblem(String),

    #[error("invalid tail window: {0}")]
    InvalidWindow(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
