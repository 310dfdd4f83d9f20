use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("series needs at least 2 distinct timestamps, found {0}")]
    TooShort(usize),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("nonpositive value {value} at index {index}")]
    NonPositive { index: usize, value: f64 },
    #[error("time {t} outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("all increments are zero")]
    ZeroIncrements,
    #[error("only {found} warm-up crossings available, {needed} needed")]
    InsufficientWarmup { found: usize, needed: usize },
    #[error("no lattice hit after time {0}")]
    NoLatticeHit(f64),
    #[error("too few level-0 crossings: {0}")]
    TooFewCrossings(usize),
    #[error("level {level} out of range (max level {max})")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("undefined statistic: {0}")]
    Undefined(String),
    #[error("missing critical value for {test} at n={n}, q={q}")]
    MissingCriticalValue { test: String, n: usize, q: f64 },
    #[error("unknown test id {0:?}")]
    UnknownTest(String),
    #[error("critical value table: {0}")]
    Table(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("interval [{lo}, {hi}] leaves the state space")]
    Boundary { lo: f64, hi: f64 },
    #[error("root not bracketed in [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },
    #[error("simulation failed on path {path}: {reason}")]
    Simulation { path: usize, reason: String },
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
