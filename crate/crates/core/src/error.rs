use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed csv: {0}")]
    MalformedCsv(String),

    #[error("bad date: {0}")]
    BadDate(String),

    #[error("non-numeric cell {value:?} in column `{column}` at line {line}")]
    NonNumericCell {
        line: u64,
        column: String,
        value: String,
    },

    #[error("region mismatch: expected `{expected}`, found `{found}`")]
    RegionMismatch { expected: String, found: String },

    #[error("column `{0}` has no observed values")]
    AllMissingColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("series too short: need at least {needed} rows, have {available}")]
    TooShortSeries { needed: usize, available: usize },

    #[error("invalid lag spec: {0}")]
    InvalidLagSpec(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("linear system is singular")]
    SingularSystem,

    #[error("schema mismatch: expected {expected} features, got {found}")]
    SchemaMismatch { expected: usize, found: usize },

    #[error("schema mismatch: {0}")]
    SchemaNames(String),

    #[error("target has zero variance")]
    ZeroVariance,

    #[error("artifact trained through {trained_through} is newer than {today}")]
    FutureArtifact {
        trained_through: NaiveDate,
        today: NaiveDate,
    },

    #[error("insufficient history: need {needed} days, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("zero denominator window ending at index {0}")]
    ZeroDenominator(usize),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("search space is empty")]
    EmptySearchSpace,

    #[error("date {0} is not in the context")]
    UnknownDate(NaiveDate),

    #[error("explanation has no contributions")]
    EmptyExplanation,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format version {0}")]
    Version(i64),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("region `{0}` has no trained models")]
    NotTrained(String),

    #[error("a training job is already running for region `{0}`")]
    TrainingInProgress(String),
}
