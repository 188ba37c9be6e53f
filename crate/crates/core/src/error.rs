use std::path::PathBuf;

use thiserror::Error;

use crate::geo::Profile;

pub type Result<T> = std::result::Result<T, Error>;

/// A single unparseable input row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub column: String,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {}: column `{}`: {}", self.row, self.column, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("config error in {path} at line {line}, column {column}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: required role `{role}` has no column `{column}`")]
    MissingColumn { role: String, column: String },

    #[error("{} row(s) failed to parse; first: {}", .0.len(), .0.first().map(|e| e.to_string()).unwrap_or_default())]
    Rows(Vec<RowError>),

    #[error("invalid subject `{id}`: {reason}")]
    InvalidSubject { id: String, reason: String },

    #[error("duplicate subject id `{0}`")]
    DuplicateId(String),

    #[error("feature `{feature}` is missing for subject `{subject}`")]
    MissingFeature { feature: String, subject: String },

    #[error("unseen level `{level}` for feature `{feature}`")]
    UnseenLevel { feature: String, level: String },

    #[error("no population data for profile {profile:?} in state `{state}`")]
    NoPopulationData { profile: Profile, state: String },

    #[error("no county in state `{state}` has an ESR cell for profile {profile:?}")]
    AllEsrCellsMissing { profile: Profile, state: String },

    #[error("county `{county}` appears under states `{first}` and `{second}`")]
    CountyStateConflict {
        county: String,
        first: String,
        second: String,
    },

    #[error("duplicate table cell {0}")]
    DuplicateCell(String),

    #[error("states missing from the population table: {0:?}")]
    UnknownStates(Vec<String>),

    #[error("state ESR attachment aborted: {failures} subject(s) failed")]
    AttachAborted {
        failures: usize,
        report: crate::geo::AttachReport,
    },

    #[error("unsupported {kind} censoring at row {row}; estimators accept right-censored data only")]
    UnsupportedCensoring { row: usize, kind: String },

    #[error("no events in data; the likelihood is undefined")]
    NoEvents,

    #[error("singular Hessian; offending columns: {0:?}")]
    SingularHessian(Vec<String>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("zero variance in paired differences")]
    ZeroVariance,

    #[error("censoring calibration failed: achieved fraction {achieved:.4}, target {target:.4}")]
    Calibration { achieved: f64, target: f64 },

    #[error("degenerate subset {subset}: {reason}")]
    DegenerateSubset { subset: usize, reason: String },

    #[error("{dataset} subset {subset}, arm `{arm}`: {source}")]
    Arm {
        dataset: String,
        subset: usize,
        arm: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Csv {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
