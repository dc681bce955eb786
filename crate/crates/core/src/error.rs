use thiserror::Error;

/// Crate-wide error type. Variants correspond to the failure modes surfaced
/// by the public operations; message text names the offending parameter and
/// the violated bound so the CLI can echo it verbatim.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("unsupported kernel spec: {0}")]
    UnsupportedKernelSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("integration failed to converge within budget {budget}: residual {residual:e} exceeds {limit:e}")]
    IntegrationBudgetExceeded {
        budget: usize,
        residual: f64,
        limit: f64,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("not enough points: k = {k} exceeds sample size n = {n}")]
    NotEnoughPoints { k: usize, n: usize },

    /// The k-th neighbor distance is zero (the query coincides with at least
    /// k sample points). Carries the zero radius; callers decide handling.
    #[error("degenerate neighbor radius {radius}: query coincides with k or more sample points")]
    DegenerateRadius { radius: f64 },

    #[error("invalid schedule parameter: {0}")]
    InvalidSchedule(String),

    #[error("sample set has no responses but the requested estimator needs them")]
    MissingResponses,

    #[error("model misconfigured: {0}")]
    ModelMisconfigured(String),

    #[error("point lies outside the evaluation box: coordinate {axis} = {value} not in [{lo}, {hi}]")]
    OutsideEvaluationBox {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("study aborted: {degenerate} degenerate trials out of {total} exceeds the 10% resample allowance")]
    StudyAborted { degenerate: usize, total: usize },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
