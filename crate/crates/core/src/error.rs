use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("objective window is empty")]
    EmptyWindow,

    #[error("{0}")]
    LineSearchFailure(Box<LineSearchFailure>),

    #[error("objective became non-finite ({value}) at iteration {k}")]
    Divergence { k: usize, value: f64 },

    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),

    #[error("generator certificate violated: {0}")]
    Generator(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("config error on line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// State dump attached to a line-search failure.
#[derive(Debug, Clone)]
pub struct LineSearchFailure {
    pub k: usize,
    pub block: usize,
    pub thetas: Vec<f64>,
    pub trial_values: Vec<f64>,
    pub window: Vec<f64>,
}

impl fmt::Display for LineSearchFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let first = self.thetas.first().copied().unwrap_or(f64::NAN);
        let last = self.thetas.last().copied().unwrap_or(f64::NAN);
        write!(
            f,
            "line search failed at iteration {} on block {} after {} trials \
             (theta {:e} -> {:e}); window = {:?}",
            self.k,
            self.block,
            self.thetas.len(),
            first,
            last,
            self.window
        )
    }
}
