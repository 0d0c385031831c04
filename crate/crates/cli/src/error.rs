//! Exit codes and the one-line error report.

use csegnet::data::DataError;
use csegnet::metrics::MetricsError;
use csegnet::train::TrainError;
use csegnet::TensorError;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Usage,
    Data,
    Numeric,
    Internal,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Self::Usage => 1,
            Self::Data => 2,
            Self::Numeric => 3,
            Self::Internal => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Kind::Data, message)
    }

    /// `{"error":"data","code":2,"message":"..."}`
    pub fn to_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: Kind,
            code: i32,
            message: &'a str,
        }
        let line = Line { error: self.kind, code: self.kind.code(), message: &self.message };
        serde_json::to_string(&line).expect("error line serializes")
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        let kind = match e {
            TensorError::InvalidConfig(_) | TensorError::InputTooSmall { .. } => Kind::Usage,
            TensorError::NonFiniteEvaluation | TensorError::DivisionDomain { .. } => Kind::Numeric,
            _ => Kind::Internal,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let kind = match e {
            DataError::InvalidGeometry(_) | DataError::InvalidAugment(_) => Kind::Usage,
            _ => Kind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Tensor(t) => t.into(),
            TrainError::Data(d) => d.into(),
            TrainError::NonFiniteGradient(_) | TrainError::Diverged(..) => Self::new(Kind::Numeric, e.to_string()),
            TrainError::ConfigMismatch | TrainError::EmptyEnsemble => Self::usage(e.to_string()),
            TrainError::BadMagic
            | TrainError::VersionUnsupported(_)
            | TrainError::CorruptEntry(_)
            | TrainError::Io { .. }
            | TrainError::EmptyTrainingSet => Self::data(e.to_string()),
            TrainError::GradientShape(_) | TrainError::UnknownParameter(_) => Self::new(Kind::Internal, e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let kind = match e {
            MetricsError::ShapeMismatch(..) => Kind::Data,
            _ => Kind::Numeric,
        };
        Self::new(kind, e.to_string())
    }
}
