use thiserror::Error;

/// Errors raised by the calibration engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("value {value} out of range for {what}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("bet {mu} outside admissible range [0, {mu_max})")]
    BetOutOfBounds { mu: f64, mu_max: f64 },

    #[error("cannot merge an empty list of e-processes")]
    EmptyMerge,

    #[error("betting strategy {0} is not available in this build")]
    UnsupportedStrategy(&'static str),

    #[error("fixed-sequence order is not a permutation of 0..{0}")]
    InvalidOrder(usize),

    #[error("LTT requires a non-adaptive acquisition policy, got {0}")]
    NotNonAdaptive(&'static str),

    #[error("risk source failed: {0}")]
    SourceFailure(String),

    #[error("no reliable hyperparameter in ground truth; TPR is undefined")]
    NoReliableArm,

    #[error("invariant breach: {0}")]
    InvariantBreach(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
