use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("separation violated: {0}")]
    SeparationViolated(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("series not converged: last term {last:.3e} vs partial sum {sum:.3e}")]
    SeriesNotConverged { last: f64, sum: f64 },
    #[error("degenerate window: all samples below floor")]
    DegenerateWindow,
    #[error("tail not resolved: |trace(T)| = {0:.3e} and no decay rate")]
    TailNotResolved(f64),
    #[error("Born iteration diverged at iterate {0}")]
    IterationDiverged(usize),
    #[error("fit unstable: residual {residual:.3e} exceeds {threshold:.3e}")]
    FitUnstable { residual: f64, threshold: f64 },
    #[error("continuation unreliable: leave-out residual {0:.3e}")]
    ContinuationUnreliable(f64),
    #[error("modulus below floor at k = {0}")]
    ZeroOnGrid(f64),
    #[error("tail mismatch: measured decay power {measured:.3}, signature {expected}")]
    TailMismatch { measured: f64, expected: u32 },
    #[error("residue degenerate: zeros {0} and {1} coincide")]
    ResidueDegenerate(usize, usize),
    #[error("real zero sets differ: {0}")]
    ZeroMismatch(String),
    #[error("contour passes through (or too near) a zero: min modulus {0:.3e}")]
    ContourThroughZero(f64),
    #[error("step too large: h*max|K| = {0:.3}")]
    StepTooLarge(f64),
    #[error("leading value {0:.3e} below floor")]
    LeadingValueZero(f64),
    #[error("window empty: epsilon {epsilon} <= chord length {length}")]
    WindowEmpty { epsilon: f64, length: f64 },
    #[error("insufficient coverage: angle bin {0} is empty")]
    InsufficientCoverage(usize),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
