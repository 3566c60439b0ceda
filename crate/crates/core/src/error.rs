use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("re-reference weight: exponent {0:.1} exceeds the safe bound")]
    WeightOverflow(f64),
    #[error("translation {shift} exceeds half the window length {half}")]
    TranslateRange { shift: f64, half: f64 },
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("singular pivot at row {0}")]
    Singular(usize),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("time step {dt} exceeds the stability bound dt_max = {dt_max}")]
    StepTooLarge { dt: f64, dt_max: f64 },
    #[error("bound violation {0:e} above clipping tolerance")]
    ClipViolation(f64),
    #[error("wave solver: {0}")]
    Wave(String),
    #[error("front tracker: {0}")]
    Tracker(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
