use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid physical constants: {0}")]
    InvalidConstants(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("grid too small: {got} nodes, need at least {need}")]
    GridTooSmall { got: usize, need: usize },
    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("degenerate field: {0}")]
    DegenerateField(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular tridiagonal system (zero pivot at row {row})")]
    SingularSystem { row: usize },
    #[error("evolution diverged at step {step}: non-finite amplitude")]
    Divergence { step: usize },
    #[error("shooting did not converge after {iterations} iterations (terminal mismatch {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("time ordering: t2 = {t2} must exceed t1 = {t1}")]
    TimeOrdering { t1: f64, t2: f64 },
    #[error("segment of length {duration} reaches the conjugate point (horizon {horizon})")]
    ConjugatePoint { duration: f64, horizon: f64 },
    #[error("frames cover [{have_start}, {have_end}] but [{need_start}, {need_end}] is required")]
    Coverage {
        have_start: f64,
        have_end: f64,
        need_start: f64,
        need_end: f64,
    },
    #[error("insufficient samples: {got} available, need {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("phase unwrap failure between frames {from} and {to}: anchor mismatch {jump:e} against the hydrodynamic prediction")]
    Unwrap { from: usize, to: usize, jump: f64 },
    #[error("resolution guard: {0}")]
    Resolution(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
