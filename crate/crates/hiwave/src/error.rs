use std::path::PathBuf;

/// Failures surfaced by the command line, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum HiwaveError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("corrupt data in {}: row {row}: {reason}", file.display())]
    Corrupt { file: PathBuf, row: usize, reason: String },
    #[error("data: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = HiwaveError> = std::result::Result<T, E>;

impl HiwaveError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 usage or config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) | Self::Json { .. } => 1,
            Self::MissingFile(_) | Self::Corrupt { .. } | Self::Data(_) | Self::Io { .. } => 2,
            Self::Numeric(_) => 3,
        }
    }
}

impl From<hiwave_core::Error> for HiwaveError {
    fn from(e: hiwave_core::Error) -> Self {
        match e {
            hiwave_core::Error::NonFinite { .. } => Self::Numeric(e.to_string()),
            hiwave_core::Error::Tensor(hiwave_core::TensorError::Domain { .. }) => Self::Numeric(e.to_string()),
            hiwave_core::Error::Dimension(_) | hiwave_core::Error::Tensor(_) => Self::Data(e.to_string()),
            hiwave_core::Error::Config(_) => Self::Config(e.to_string()),
        }
    }
}
