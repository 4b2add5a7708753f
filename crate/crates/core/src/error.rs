use thiserror::Error;

/// Unified error type for the simulator and analytics pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad parameter values, unknown references,
    /// incompatible policy/task combinations). CLI exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input data (trial logs, CSV, report files). CLI exit code 3.
    #[error("data error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Data that is structurally valid but unusable for the requested
    /// computation, e.g. a gaze trace whose every velocity sample exceeds
    /// the detector prefilter, or an all-constant observation table.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Rank-deficient regression design; names the collinear columns.
    #[error("rank-deficient design: columns {0:?} are collinear")]
    RankDeficient(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Process exit code mandated for this error class: 2 for config
    /// errors, 3 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
