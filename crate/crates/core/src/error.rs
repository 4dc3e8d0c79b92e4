use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("invalid band {low_hz}..{high_hz} Hz (nyquist {nyquist_hz} Hz)")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        nyquist_hz: f64,
    },
    #[error("window out of range: {0}")]
    OutOfRange(String),
    #[error("series too short: need more than {required} samples, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },
    #[error("not enough candidate points: need {required}, found {available}")]
    NotEnoughPoints { required: usize, available: usize },
    #[error("non-finite value in {0}")]
    NonFiniteInput(String),
    #[error("index {index} out of range ({detail})")]
    IndexOutOfRange { index: usize, detail: String },
    #[error("matrix is not square ({rows} rows, row {row} has {cols} columns)")]
    NonSquare { rows: usize, row: usize, cols: usize },
    #[error("degenerate neighborhood: bandwidth resolved to zero with nonzero distances")]
    DegenerateNeighborhood,
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("shuffled baseline {0} is too close to 1")]
    DegenerateBaseline(f64),
    #[error("recording has no event onset and no explicit windows were given")]
    MissingOnset,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("unstable system: {0}")]
    Unstable(String),
    #[error("singular design matrix")]
    SingularDesign,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
