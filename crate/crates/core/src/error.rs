use thiserror::Error;

/// Errors produced by every stage of the post-processing chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("input has zero variance")]
    ZeroVariance,

    #[error("no zero crossing within {max_lag} lags")]
    NoZeroCrossing { max_lag: usize },

    #[error("degenerate calibration design: {0}")]
    DegenerateFit(String),

    #[error("no certifiable randomness: {0}")]
    NoCertifiableRandomness(String),

    #[error("no feasible output length; best achievable eps_exp is {best_eps_exp:.3}")]
    InfeasibleDimensions { best_eps_exp: f64 },

    #[error("dimension mismatch: expected {expected} bits, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("code {code} out of range for a {bits}-bit ADC")]
    CodeOutOfRange { code: i64, bits: u32 },

    #[error("malformed trace file: {0}")]
    Format(String),

    #[error("insufficient data: need {needed} bits, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The underlying error with stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Name of the outermost pipeline stage that failed, if tagged.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

/// Tags errors with the pipeline stage that produced them.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            tagged @ Error::Stage { .. } => tagged,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
