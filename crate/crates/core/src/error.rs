use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ingestion
    #[error("unparseable row {row}: {reason}")]
    UnparseableRow { row: usize, reason: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("no valid trading days after filtering")]
    NoValidDays,
    #[error("invalid session specification: {0}")]
    InvalidSession(String),

    // realized measures
    #[error("empty intraday return vector")]
    EmptyDay,
    #[error("need at least {needed} intraday returns, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("degenerate day {0:?}: zero realized variance")]
    DegenerateDay(Option<NaiveDate>),

    // quantile regression
    #[error("design matrix is rank deficient (rank {rank} < {cols})")]
    RankDeficientDesign { rank: usize, cols: usize },
    #[error("solver did not converge within {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{failed} of {total} bootstrap replications failed")]
    BootstrapFailure { failed: usize, total: usize },

    // model builder
    #[error("series too short: need {needed}, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("index {index} + horizon {horizon} out of range for length {len}")]
    IndexOutOfRange { index: usize, horizon: usize, len: usize },
    #[error("model specification requires implied volatility but the panel has none")]
    MissingImpliedVol,
    #[error("insufficient history: need {needed} rows, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("look-ahead detected at row {row}: regressor dated {regressor} vs target starting {target}")]
    LookAhead {
        row: usize,
        regressor: NaiveDate,
        target: NaiveDate,
    },
    #[error("unknown model specification '{name}'; available: {available}")]
    UnknownSpec { name: String, available: String },
    #[error("spec parse error at line {line}: {reason}")]
    SpecParse { line: usize, reason: String },

    // caviar
    #[error("quantile recursion exploded at t = {0}")]
    ExplosivePath(usize),
    #[error("all optimizer starts failed")]
    AllStartsFailed,
    #[error("no stable bandwidth region found")]
    NoStableRegion,

    // arfima
    #[error("non-finite likelihood")]
    NonFiniteLikelihood,
    #[error("optimizer diverged: {0}")]
    OptimizerDivergence(String),
    #[error("root bracketing failed: {0}")]
    RootBracketFailure(String),

    // evaluation
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dynamic quantile test refused for horizon {0} > 1")]
    MultiStepRefused(usize),
    #[error("loss differential has zero variance")]
    DegenerateVariance,

    // implied volatility
    #[error("critical price solver failed: {0}")]
    RootFailure(String),
    #[error("option price {price} outside attainable range [{low}, {high}]")]
    NoBracket { price: f64, low: f64, high: f64 },
    #[error("need at least 2 usable quotes, got {0}")]
    TooFewQuotes(usize),
    #[error("no maturities bracket the 30-day horizon")]
    NoBracketingMaturities,

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
