use thiserror::Error;

pub type Result<T> = std::result::Result<T, SvoError>;

#[derive(Debug, Error)]
pub enum SvoError {
    #[error("invalid signal array: {0}")]
    InvalidSignal(String),

    #[error("{requested} decomposition levels requested for {samples} samples; maximum admissible J is {max}")]
    LevelTooLarge {
        requested: usize,
        max: usize,
        samples: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("weight preset `{name}` has {preset_len} entries but {levels} levels were requested")]
    PresetLength {
        name: String,
        preset_len: usize,
        levels: usize,
    },

    #[error("degenerate scale covariance (reciprocal condition estimate {rcond:.3e})")]
    DegenerateCovariance { rcond: f64 },

    #[error("aggregate matrix not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not positive semi-definite: {0}")]
    NotPsd(String),

    #[error("invalid bootstrap configuration: {0}")]
    InvalidBootstrap(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl SvoError {
    /// True for failures caused by the numbers themselves (singular or
    /// indefinite matrices) rather than by malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            SvoError::DegenerateCovariance { .. }
                | SvoError::NotPositiveDefinite
                | SvoError::NotPsd(_)
                | SvoError::Inconsistent(_)
        )
    }
}
