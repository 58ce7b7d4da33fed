use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("{path}: line {line}: {detail}")]
    Parse { path: PathBuf, line: usize, detail: String },

    #[error("{path}: run {run}: {detail}")]
    Ordering { path: PathBuf, run: u64, detail: String },

    #[error("schema error in {path}: {detail}")]
    Schema { path: PathBuf, detail: String },

    #[error("residual covariance is singular; a positive regularizer is required")]
    RegularizationRequired,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("training diverged at epoch {epoch}: loss {loss} after {previous}")]
    Diverged { epoch: usize, loss: f64, previous: f64 },

    #[error("non-finite gradient at attack step {step}")]
    NonFiniteGradient { step: usize },

    #[error("attack failed on {provenance}: {source}")]
    AttackFailed {
        provenance: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("model container: {0}")]
    Container(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or mismatched input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Shape { .. }
                | Error::Parse { .. }
                | Error::Ordering { .. }
                | Error::Schema { .. }
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Container(_)
                | Error::UndefinedMetric(_)
        )
    }

    /// True for numerical failures (divergence, NaN, singular statistics).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFiniteLoss { .. }
            | Error::Diverged { .. }
            | Error::NonFiniteGradient { .. }
            | Error::RegularizationRequired => true,
            Error::AttackFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
