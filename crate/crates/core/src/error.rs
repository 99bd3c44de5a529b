use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("structural violation: {0}")]
    Structural(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("Picard iteration did not converge at time level {level} (last update {residual:e})")]
    PicardDivergence { level: usize, residual: f64 },
    #[error("non-finite values at time level {level}")]
    BlowUp { level: usize },
    #[error("domain error at index {index}: {msg}")]
    Domain { index: usize, msg: String },
    #[error("range error: {0}")]
    Range(String),
    #[error("no (beta, B) pair certified on the search grid; best margin {best_margin:e}")]
    SearchFailure { best_margin: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("regression is rank deficient at step {step}; increase the number of paths")]
    RankDeficient { step: usize },
    #[error("problem too large for brute force: {0}")]
    Scale(String),
    #[error("noise axis too short: |U_w| at the boundary is {slope:e}, limit {limit:e}")]
    NoiseTruncation { slope: f64, limit: f64 },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("empty sample set")]
    EmptySamples,
    #[error("comparison ODE blew up at t = {t}")]
    OdeBlowUp { t: f64 },
    #[error("solve {index} of the sequence failed: {source}")]
    Sequence {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed data: {0}")]
    Format(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownPreset(_) => 2,
            Error::Io(_) => 4,
            Error::Sequence { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
