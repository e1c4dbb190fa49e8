use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing or malformed header at line 1: expected `{expected}`")]
    Header { expected: String },
    #[error("negative count at line {line}")]
    NegativeCount { line: u64 },
    #[error("negative prediction at line {line}")]
    NegativePrediction { line: u64 },
    #[error("empty image_id at line {line}")]
    EmptyId { line: u64 },
    #[error("duplicate image_id `{id}` at line {line}")]
    DuplicateId { id: String, line: u64 },
    #[error("point ({x}, {y}) outside image `{id}` of size {width}x{height} at line {line}")]
    PointOutOfBounds {
        id: String,
        x: f64,
        y: f64,
        width: f64,
        height: f64,
        line: u64,
    },
    #[error("invalid image size for `{id}` at line {line}: dimensions must be positive")]
    InvalidDimensions { id: String, line: u64 },
    #[error("cannot build a histogram from an empty record list")]
    EmptyInput,
    #[error("invalid bin specification: {0}")]
    InvalidBins(String),
    #[error("unknown format `{0}` (expected csv or jsonl)")]
    UnknownFormat(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum BinningError {
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("brute-force enumeration supports at most {max} distinct counts, got {got}")]
    TooManyCounts { got: usize, max: usize },
    #[error("gamma must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("alpha must be a positive integer")]
    InvalidAlpha,
    #[error("split ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("degenerate split: {train} train / {test} test samples")]
    DegenerateSplit { train: usize, test: usize },
    #[error("grid search needs at least {min} records, got {got}")]
    InsufficientData { got: usize, min: usize },
    #[error("grid search needs at least one gamma, one ratio and one seed")]
    EmptyGrid,
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("cannot schedule an empty record list")]
    EmptyRecords,
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("count {count} of `{id}` exceeds the last bin edge {max}")]
    OutOfRange { id: String, count: u64, max: u64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no predictions to evaluate")]
    EmptyPredictions,
    #[error("every bin is empty")]
    AllBinsEmpty,
    #[error("threshold grid is empty")]
    EmptyThetas,
    #[error("thresholds must be finite and sorted ascending")]
    UnsortedThetas,
    #[error("GAME level {0} exceeds the supported maximum of 6")]
    LevelTooLarge(u32),
    #[error("point ({x}, {y}) lies outside image `{id}` ({width}x{height})")]
    PointOutOfBounds {
        id: String,
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },
}
