use thiserror::Error;

/// Errors raised while validating inputs or running the interval pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("alpha out of range: {0} (valid range is [0, 0.5])")]
    AlphaOutOfRange(f64),

    #[error("invalid option `{field}`: {reason}")]
    InvalidOption { field: &'static str, reason: String },

    #[error("theta_0 lies outside the parameter space")]
    ThetaOutsideSpace,

    #[error("parameter space has empty interior")]
    EmptyInterior,

    #[error("projection direction p is the zero vector")]
    ZeroDirection,

    #[error("non-basis direction p requires a polytope space with a bound_transform hook")]
    UnsupportedDirection,

    #[error("moment model returned a non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("standard deviation of kept moment {0} is not strictly positive")]
    ZeroSigma(usize),

    #[error("at least two observations are required, got {0}")]
    TooFewObservations(usize),

    #[error("LP solver stalled after {0} pivots")]
    LpStalled(usize),

    #[error("critical value search inconsistent: {0}")]
    CritvalInconsistent(String),

    #[error("kriging design contains duplicated rows ({0} and {1})")]
    DuplicateDesign(usize, usize),

    #[error("kriging design degenerate: {0}")]
    DegenerateDesign(String),

    #[error("no local solution found from any start")]
    NoLocalSolution,

    #[error("polytope too thin: no accepted draws within {0} attempts")]
    PolytopeTooThin(usize),

    #[error("no feasible point found (best min-max value {best_minmax:.6})")]
    NoFeasiblePoint { best_minmax: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed result file: {0}")]
    MalformedResult(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
