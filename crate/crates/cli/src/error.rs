use std::fmt;

use hlik_core::chain::ChainError;
use hlik_core::datagen::DatagenError;
use hlik_core::fista::FistaError;
use hlik_core::ik::IkError;
use hlik_core::metrics::MetricsError;

/// An error with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("E_USAGE", message)
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Self::new("E_IO", format!("{context}: {err}"))
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        if self.code == "E_USAGE" {
            2
        } else {
            1
        }
    }

    /// `error[CODE]: message` on one line.
    pub fn line(&self) -> String {
        let msg = self.message.replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.code, msg.trim())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("E_IO", e.to_string())
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::Io(e) => Self::new("E_IO", e.to_string()),
            e => Self::new("E_CHAIN", e.to_string()),
        }
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        let code = match &e {
            DatagenError::Io(_) => "E_IO",
            DatagenError::Parse { .. } => "E_PARSE",
            DatagenError::UnreachableGeometry { .. } => "E_UNREACHABLE",
            DatagenError::InvalidConfig(_) => "E_CONFIG",
            DatagenError::Chain(_) => "E_CHAIN",
        };
        Self::new(code, e.to_string())
    }
}

impl From<FistaError> for CliError {
    fn from(e: FistaError) -> Self {
        let code = match &e {
            FistaError::Io(_) => "E_IO",
            FistaError::EmptyDataset => "E_EMPTY_DATASET",
            FistaError::Format(_) => "E_MODEL_FORMAT",
            FistaError::VersionMismatch { .. } => "E_MODEL_VERSION",
            FistaError::DimensionMismatch { .. } => "E_DIMENSION",
            FistaError::ColdStart { .. } => "E_COLD_START",
            FistaError::InvalidConfig(_) | FistaError::InvalidTraining(_) => "E_CONFIG",
        };
        Self::new(code, e.to_string())
    }
}

impl From<IkError> for CliError {
    fn from(e: IkError) -> Self {
        Self::new("E_IK", e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let code = match &e {
            MetricsError::MismatchedStreams(_) => "E_MISMATCHED_STREAMS",
            MetricsError::Io(_) => "E_IO",
            MetricsError::Json(_) => "E_IO",
        };
        Self::new(code, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("E_PARSE", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new("E_PARSE", e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
