use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("right-hand side has mean {mean:e}, tolerance is {tol:e}")]
    MeanNotZero { mean: f64, tol: f64 },

    #[error("grid too coarse: {points} points per axis, need at least {min}")]
    GridTooCoarse { points: usize, min: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {radius:e} from the origin is inside the action floor {floor:e}")]
    OriginSingularity { radius: f64, floor: f64 },

    #[error("critical point structure mismatch: found {minima} minima and {saddles} saddles ({other} other)")]
    CriticalPointCountMismatch { minima: usize, saddles: usize, other: usize },

    #[error("point lies on the separatrix (|H - H_c| = {gap:e})")]
    OnSeparatrix { gap: f64 },

    #[error("finite-difference step must be positive, got {0}")]
    FdStepInvalid(f64),

    #[error("model kind mismatch: {0}")]
    ModelKindMismatch(String),

    #[error("substep rule violated: dt = {dt:e} exceeds c_sub*eps^2 = {limit:e}")]
    StepRuleViolation { dt: f64, limit: f64 },

    #[error("paths too short: exp(-lambda*T) = {residual:e} > 0.01")]
    PathsTooShort { residual: f64 },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("insufficient binding hits: {got} < {needed} ({context})")]
    InsufficientHits { got: usize, needed: usize, context: String },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
