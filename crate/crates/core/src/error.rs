use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("geometry infeasible: {0}")]
    GeometryInfeasible(String),
    #[error("buffer set is empty")]
    EmptyDelta,
    #[error("walk did not hit the target within {0} steps")]
    Timeout(u64),
    #[error("step cap of {0} exceeded")]
    StepCapExceeded(u64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("problem too large: {unknowns} unknowns (limit {limit})")]
    TooLarge { unknowns: usize, limit: usize },
    #[error("solver did not converge: residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("set is empty")]
    EmptySet,
    #[error("density row is identically zero")]
    DegenerateRow,
    #[error("epsilon {eps} outside admissible range (max {max})")]
    EpsilonOutOfRange { eps: f64, max: f64 },
    #[error("invariant measures differ: total variation {0:e}")]
    InvariantMismatch(f64),
    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),
    #[error("not enough steps: n = {n}, need at least {required}")]
    NotEnoughSteps { n: f64, required: f64 },
    #[error("mixing time not reached within {0} steps")]
    NotConverged(usize),
    #[error("deviation level {gamma} exceeds sigma^2 ^ 1/2 = {max}")]
    GammaOutOfRange { gamma: f64, max: f64 },
    #[error("k(gamma) is not positive ({0})")]
    KNonpositive(f64),
    #[error("relative deviation {delta} exceeds {max}")]
    DeltaOutOfRange { delta: f64, max: f64 },
    #[error("function value {0} outside [-1, 1]")]
    FOutOfRange(f64),
    #[error("too many rejections ({0}) while sampling a conditioned path")]
    TooManyRejections(u64),
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
    #[error("{stage}: {inner}")]
    Stage { stage: String, inner: Box<Error> },
}

impl Error {
    /// Attach the name of the pipeline stage that failed.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), inner: Box::new(self) }
    }

    /// The error under any stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { inner, .. } => inner.root(),
            e => e,
        }
    }
}

/// Label errors of a fallible step with its stage.
pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
