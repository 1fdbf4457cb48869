use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },

    #[error("{what}:{line}: {message}")]
    Parse { what: String, line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("capitalization variants present but no component coordinates were supplied")]
    MissingCoordinates,

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },

    #[error("exp argument {value} exceeds the overflow bound {bound}")]
    OverflowGuard { value: f64, bound: f64 },

    #[error("relu mean is zero at cell ({row}, {col}) where the count is positive")]
    DivisionByZero { row: usize, col: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid rank {rank} for a {rows}x{cols} matrix (need 1 <= rank < min(rows, cols) and rank <= 10)")]
    InvalidRank { rank: usize, rows: usize, cols: usize },

    #[error("rank deficiency: effective rank {effective} below requested {requested}")]
    RankDeficiency { effective: usize, requested: usize },

    #[error("insufficient rank {0}: bias components need rank >= 3")]
    InsufficientRank(usize),

    #[error("source `{0}` has zero articles")]
    ZeroArticles(String),

    #[error("degenerate (zero) variance in component `{0}`")]
    DegenerateVariance(String),

    #[error("too few shared sources: {0} (need at least 3)")]
    TooFewShared(usize),

    #[error("too few sources: {got} (need at least {need})")]
    TooFewSources { got: usize, need: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("source `{source_id}` has no finite weighted contribution on the {axis} axis")]
    NoContribution { source_id: String, axis: &'static str },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("stale upstream artifact `{0}`: content hash does not match the run manifest")]
    StaleUpstream(String),

    #[error("missing artifact `{0}`: run the upstream stage first")]
    MissingArtifact(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, err: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), err }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::StaleUpstream(_) | Error::MissingArtifact(_) => 3,
            Error::NumericalFailure(_) => 4,
            _ => 1,
        }
    }
}
