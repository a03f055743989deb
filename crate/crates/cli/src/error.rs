use camtraj::{AnalysisError, CalibrationError, ConditioningError, FormatError, GeometryError, MetricsError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Input,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => 1,
            Self::Input => 2,
            Self::Numeric => 3,
        }
    }
}

#[derive(Debug, Clone, Error, Serialize)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), video_id: None }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Input, message)
    }

    pub fn for_video(mut self, id: &str) -> Self {
        self.video_id.get_or_insert_with(|| id.to_string());
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// One-line machine-readable form for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: &'a CliError,
            exit_code: i32,
        }
        serde_json::to_string(&Wrapper { error: self, exit_code: self.exit_code() }).expect("error serializes")
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        let kind = match e {
            CalibrationError::TooFewValidPixels { .. }
            | CalibrationError::InsufficientInliers { .. }
            | CalibrationError::NoScales
            | CalibrationError::NonPositiveScale(_) => ErrorKind::Numeric,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        let kind = match e {
            AnalysisError::DegeneratePoints | AnalysisError::TooFewPoints(_) => ErrorKind::Numeric,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let kind = match e {
            MetricsError::ZeroVariance | MetricsError::ZeroNormFeature(_) => ErrorKind::Numeric,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ConditioningError> for CliError {
    fn from(e: ConditioningError) -> Self {
        Self::input(e.to_string())
    }
}
