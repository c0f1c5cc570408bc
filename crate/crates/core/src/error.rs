use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),

    #[error("coordinate {coordinate}: value {value} lies outside the support [{lower}, {upper}]")]
    OutOfSupport {
        coordinate: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("design row {row}: {source}")]
    EnsembleRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("information matrix is rank deficient")]
    RankDeficient,

    #[error("degenerate leverage h = {leverage} at sample {sample}")]
    IllConditioned { sample: usize, leverage: f64 },

    #[error("every candidate model was skipped")]
    NoCandidate,

    #[error("time instant {instant}: {source}")]
    Instant {
        instant: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate signal: zero norm")]
    DegenerateSignal,

    #[error("warped trajectory covers only {fraction} of the reference span")]
    InsufficientOverlap { fraction: f64 },

    #[error("infeasible warp: k = {k}, phi = {phi}")]
    InfeasibleWarp { k: f64, phi: f64 },

    #[error("time warping failed for trajectory {index}: {reason}")]
    WarpFailure { index: usize, reason: String },

    #[error("prediction failed at xi = {xi:?}: {reason}")]
    Prediction { xi: Vec<f64>, reason: String },

    #[error("truth series is constant in time")]
    DegenerateVariance,

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_row(self, row: usize) -> Self {
        Error::EnsembleRow {
            row,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_instant(self, instant: usize) -> Self {
        Error::Instant {
            instant,
            source: Box::new(self),
        }
    }
}
