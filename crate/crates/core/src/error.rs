use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian: ||A - A^dag||_F = {defect:.3e} exceeds {allowed:.3e}")]
    NonHermitianInput { defect: f64, allowed: f64 },

    #[error("iteration did not converge: {0}")]
    ConvergenceFailure(String),

    /// The two smallest singular values are too close to separate a single
    /// null vector; use `null_space_basis` instead.
    #[error("degenerate null space: sigma_0 = {sigma_min:.3e}, sigma_1 = {sigma_next:.3e}")]
    DegenerateNullSpace { sigma_min: f64, sigma_next: f64 },

    #[error("requested {requested} null vectors, only {found} satisfy the tolerance")]
    RankMismatch { requested: usize, found: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time step too large: total jump probability {total:.3e} per step")]
    TimestepTooLarge { total: f64 },

    #[error("jump channel {channel} has zero probability for this state")]
    ZeroJumpProbability { channel: usize },

    #[error("clock recipe mismatch: expected {expected}, got {got}")]
    RecipeMismatch { expected: &'static str, got: String },

    #[error("block supports overlap: leaked weight {leak:.3e}")]
    SupportOverlap { leak: f64 },

    #[error("slice {slice} has zero weight in the history state")]
    ZeroSlice { slice: usize },

    #[error("runtime {t_total} is not an integer multiple of the time step {dt}")]
    GridMisaligned { t_total: f64, dt: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
