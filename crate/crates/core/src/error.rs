use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("column `{column}` has role {found}, expected {expected}")]
    RoleMismatch {
        column: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("cumulative column `{column}` decreases for state {state} on {date}")]
    NonMonotoneCumulative {
        state: String,
        column: String,
        date: NaiveDate,
    },
    #[error("state {state} has a gap in dates after {after}")]
    GapInDates { state: String, after: NaiveDate },
    #[error("duplicate row for state {state} on {date}")]
    DuplicateCell { state: String, date: NaiveDate },
    #[error("value {value} in column `{column}` for {state} on {date} is outside [{lo}, {hi}]")]
    ValueOutOfRange {
        column: String,
        state: String,
        date: NaiveDate,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("state {state} has {len} days, fewer than the window of {window}")]
    SeriesTooShort {
        state: String,
        len: usize,
        window: usize,
    },
    #[error("invalid transform parameters: {0}")]
    InvalidTransform(String),
    #[error("invalid regression spec: {0}")]
    InvalidSpec(String),
    #[error("no complete rows remain after restricting to the sample window")]
    EmptyDesign,
    #[error("design is rank deficient: column `{column}` is linearly dependent on earlier columns")]
    RankDeficient { column: String },
    #[error("underdetermined fit: {n} rows for {k} columns")]
    Underdetermined { n: usize, k: usize },
    #[error("cluster-robust covariance needs at least two clusters")]
    SingleCluster,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown coefficient `{0}`")]
    UnknownCoefficient(String),
    #[error("observation {row} has leverage {leverage} (numerically one)")]
    LeverageOne { row: usize, leverage: f64 },
    #[error("all {0} placebo replicates failed")]
    AllReplicatesFailed(usize),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("only {survivors} epidemics fell in the attack-rate band, {needed} needed")]
    InsufficientSurvivors { survivors: usize, needed: usize },
    #[error("epidemic paths have different horizons ({0} vs {1})")]
    HorizonMismatch(usize, usize),
    #[error("counterfactual path diverged on {0}")]
    NonconvergentPath(NaiveDate),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::UnknownState(_) => "UnknownState",
            Error::RoleMismatch { .. } => "RoleMismatch",
            Error::NonMonotoneCumulative { .. } => "NonMonotoneCumulative",
            Error::GapInDates { .. } => "GapInDates",
            Error::DuplicateCell { .. } => "DuplicateCell",
            Error::ValueOutOfRange { .. } => "ValueOutOfRange",
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::InvalidTransform(_) => "InvalidTransform",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::EmptyDesign => "EmptyDesign",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::Underdetermined { .. } => "Underdetermined",
            Error::SingleCluster => "SingleCluster",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::UnknownCoefficient(_) => "UnknownCoefficient",
            Error::LeverageOne { .. } => "LeverageOne",
            Error::AllReplicatesFailed(_) => "AllReplicatesFailed",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InsufficientSurvivors { .. } => "InsufficientSurvivors",
            Error::HorizonMismatch(..) => "HorizonMismatch",
            Error::NonconvergentPath(_) => "NonconvergentPath",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            Error::Csv(_) | Error::Json(_) | Error::Parse(_) => 3,
            Error::MissingColumn(_)
            | Error::UnknownColumn(_)
            | Error::UnknownState(_)
            | Error::RoleMismatch { .. }
            | Error::NonMonotoneCumulative { .. }
            | Error::GapInDates { .. }
            | Error::DuplicateCell { .. }
            | Error::ValueOutOfRange { .. }
            | Error::SeriesTooShort { .. } => 4,
            Error::InvalidTransform(_) | Error::InvalidSpec(_) | Error::InvalidConfig(_) => 5,
            Error::EmptyDesign => 10,
            Error::RankDeficient { .. } => 11,
            Error::Underdetermined { .. } => 12,
            Error::SingleCluster => 13,
            Error::DimensionMismatch { .. } => 14,
            Error::UnknownCoefficient(_) => 15,
            Error::LeverageOne { .. } => 16,
            Error::AllReplicatesFailed(_) => 17,
            Error::InsufficientSurvivors { .. } => 18,
            Error::HorizonMismatch(..) => 19,
            Error::NonconvergentPath(_) => 20,
        }
    }
}
