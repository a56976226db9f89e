use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for a tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("invalid mode set: {0}")]
    InvalidModeSet(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested {requested} singular triplets but at most {max} exist")]
    RankOutOfRange { requested: usize, max: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("class {class} has {count} samples; at least {required} are needed")]
    InsufficientSamples {
        class: u8,
        count: usize,
        required: usize,
    },

    #[error("pooled variance of the first entry is {0:e}; cannot normalise the covariance scale")]
    DegenerateNormalization(f64),

    #[error("cannot extract a direction from a zero vector")]
    ZeroVector,

    #[error(
        "randomized projection kept {found} of {needed} tuples after pruning; \
         increase the number of projections or the overlap threshold"
    )]
    PoolExhausted { needed: usize, found: usize },

    #[error("component {component} in mode {mode} vanished at iteration {iteration}")]
    DegenerateComponent {
        component: usize,
        mode: usize,
        iteration: usize,
    },

    #[error("basis matrix for mode {mode} is rank deficient at iteration {iteration}")]
    SingularBasis { mode: usize, iteration: usize },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("rank mismatch: {0}")]
    RankMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{failed} of {total} replications failed; aborting scenario (first error: {first})")]
    ScenarioAborted {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by bad input, paths or files rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format(_) | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
