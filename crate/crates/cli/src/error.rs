use std::fmt;

use vispflow::dataset::DatasetError;
use vispflow::eval::EvalError;
use vispflow::flowinone::FlowError;
use vispflow::numcore::NumError;
use vispflow::qc::QcError;
use vispflow::render::RenderError;

#[derive(Debug, PartialEq)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
    Unlayoutable(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Numeric(_) => 4,
            Self::Unlayoutable(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Data(_) => "data",
            Self::Numeric(_) => "numeric",
            Self::Unlayoutable(_) => "unlayoutable",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Numeric(m) | Self::Unlayoutable(m) => m,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.message(), "exit_code": self.exit_code() }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Unlayoutable { .. } | RenderError::NoValidFont(_) => Self::Unlayoutable(e.to_string()),
            RenderError::InvalidArgument(_) | RenderError::InvalidMarker(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Render(r) => r.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<NumError> for CliError {
    fn from(e: NumError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::NonFinite { .. } | FlowError::DegenerateLatent(_) => Self::Numeric(e.to_string()),
            FlowError::Config(m) => Self::Usage(m),
            FlowError::Render(r) => r.into(),
            FlowError::Dataset(d) => d.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<QcError> for CliError {
    fn from(e: QcError) -> Self {
        match e {
            QcError::Threshold(_) => Self::Usage(e.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::DegenerateEdit { .. } => Self::Numeric(e.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}
