use thiserror::Error;

/// Errors raised by the elicitation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A derivative was requested at a point where some output probability is zero.
    #[error("singular evaluation: {0}")]
    SingularEvaluation(String),

    #[error("singular matrix (reciprocal condition {rcond:.3e})")]
    SingularMatrix { rcond: f64 },

    #[error("no convergence after {iterations} iterations (gap {gap:.3e})")]
    Convergence {
        iterations: usize,
        gap: f64,
        best: Vec<f64>,
    },

    #[error("unsupported channel: {0}")]
    UnsupportedChannel(String),

    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    #[error("catalog ingestion failed: {}", format_line_errors(.0))]
    Ingestion(Vec<LineError>),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One offending line of a catalog file (1-based line number).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

fn format_line_errors(errors: &[LineError]) -> String {
    errors
        .iter()
        .map(|e| format!("line {}: {}", e.line, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Stable machine-readable code, used by the CLI error line and the HTTP layer.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SingularEvaluation(_) => "singular_evaluation",
            Error::SingularMatrix { .. } => "singular_matrix",
            Error::Convergence { .. } => "convergence",
            Error::UnsupportedChannel(_) => "unsupported_channel",
            Error::InfeasibleTarget(_) => "infeasible_target",
            Error::Construction(_) => "construction",
            Error::Initialization(_) => "initialization",
            Error::Ingestion(_) => "ingestion",
            Error::NotFound(_) => "not_found",
            Error::Conflict(_) => "conflict",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
