use thiserror::Error;

use crate::model::StatePoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{field}: shares must be nonnegative and sum to one (sum = {sum})")]
    NonSimplexShares { field: String, sum: f64 },

    #[error("{field}: covariance factor is not positive definite ({reason})")]
    NonPDCovariance { field: String, reason: String },

    #[error("horizon: {reason}")]
    BadHorizon { reason: String },

    #[error("{field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unknown parameter path `{0}`")]
    UnknownParameter(String),

    #[error("transition from period {t} exceeds the horizon end {t_max}")]
    HorizonExceeded { t: u32, t_max: u32 },

    #[error("state space has more than {cap} states")]
    StateSpaceTooLarge { cap: usize },

    #[error("state not in the solved state space: {0:?}")]
    UnknownState(StatePoint),

    #[error("panel is empty")]
    EmptyPanel,

    #[error("observation for person {person_id} at t={t}: {reason}")]
    InconsistentObservation { person_id: u32, t: u32, reason: String },

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("information matrix is singular (ridge {ridge:e} exceeds threshold)")]
    SingularInformation { ridge: f64 },

    #[error("no draw fell inside the confidence set")]
    NoAcceptedDraws,

    #[error("decision rule needs at least one sample row")]
    EmptySamples,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("line {line}: {reason}")]
    SchemaError { line: usize, reason: String },

    #[error("person {person_id}: state at t={t} does not follow from the previous choice")]
    TransitionInconsistency { person_id: u32, t: u32 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Variant name, for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonSimplexShares { .. } => "NonSimplexShares",
            Error::NonPDCovariance { .. } => "NonPDCovariance",
            Error::BadHorizon { .. } => "BadHorizon",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::UnknownParameter(_) => "UnknownParameter",
            Error::HorizonExceeded { .. } => "HorizonExceeded",
            Error::StateSpaceTooLarge { .. } => "StateSpaceTooLarge",
            Error::UnknownState(_) => "UnknownState",
            Error::EmptyPanel => "EmptyPanel",
            Error::InconsistentObservation { .. } => "InconsistentObservation",
            Error::SingularCovariance => "SingularCovariance",
            Error::SingularInformation { .. } => "SingularInformation",
            Error::NoAcceptedDraws => "NoAcceptedDraws",
            Error::EmptySamples => "EmptySamples",
            Error::Dimension(_) => "Dimension",
            Error::SchemaError { .. } => "SchemaError",
            Error::TransitionInconsistency { .. } => "TransitionInconsistency",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}
