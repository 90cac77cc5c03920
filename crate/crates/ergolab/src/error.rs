use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside the space's domain: {0}")]
    Domain(String),

    #[error("operation not supported for this space kind: {0}")]
    UnsupportedSpace(String),

    #[error("eigen index {index} beyond truncation level {n_max}")]
    IndexBeyondTruncation { index: usize, n_max: usize },

    #[error("series diverges for effective dimension {d_eff}")]
    DivergentSeries { d_eff: f64 },

    #[error("operation requires a {expected} basis, got {got}")]
    WrongBoundaryFlavor { expected: String, got: String },

    #[error("heat kernel truncation too coarse at t={t}: need n_max >= {required}")]
    TruncationTooCoarse { t: f64, required: usize },

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("numerical blow-up: |state| = {value} exceeded guard {guard}")]
    Blowup { value: f64, guard: f64 },

    #[error("measures live on mismatched spaces")]
    MismatchedSpaces,

    #[error("Sinkhorn did not converge within {max_iter} iterations (residual {residual:.3e})")]
    NoConvergence { max_iter: usize, residual: f64 },

    #[error("witness function violates the 1-Lipschitz check: local slope {slope}")]
    LipschitzViolation { slope: f64 },

    #[error("empty path has no occupation measure")]
    EmptyPath,

    #[error("subsample count {n} incompatible with grid: t/N = {stride} is not a multiple of h = {h}")]
    IncompatibleSubsample { n: usize, stride: f64, h: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
