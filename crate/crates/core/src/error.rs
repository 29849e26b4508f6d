use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("pulse rate {pulse_rate} does not divide total gain {total_gain}; valid pulse rates: {valid:?}")]
    NotADivisor {
        pulse_rate: usize,
        total_gain: usize,
        valid: Vec<usize>,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("exhaustive ML infeasible for {0} users (limit is 20)")]
    MlInfeasible(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Regime(String),
}

pub type Result<T> = std::result::Result<T, Error>;
