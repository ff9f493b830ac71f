use thiserror::Error;

/// Errors raised by the analytic and Monte-Carlo operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("measure is not centered: mean = {mean:e}")]
    NotCentered { mean: f64 },
    #[error("weight function is not strictly positive on [-1, 1]: d({at}) = {value:e}")]
    NonPositiveWeight { at: f64, value: f64 },
    #[error("integrand is not finite at node x = {at}")]
    NonFinite { at: f64 },
    #[error("divergent integral: {0}")]
    DivergentIntegral(String),
    #[error("{what} did not converge (residual {residual:e})")]
    NoConvergence { what: String, residual: f64 },
    #[error("singular derivative: |1 - int g^2| = {denominator:e}")]
    SingularDerivative { denominator: f64 },
    #[error("real point {x} lies on the support of the free convolution")]
    OnSupport { x: f64 },
    #[error("support edge not found: {0}")]
    EdgeNotFound(String),
    #[error("out of regime: {0}")]
    OutOfRegime(String),
    #[error("contour too close to a singularity (margin {margin:e})")]
    ContourTooClose { margin: f64 },
    #[error("dense matrix was not retained for this sample")]
    MatrixNotRetained,
    #[error("point {re} + {im}i lies on the branch cut (-inf, lambda_1]")]
    BranchCut { re: f64, im: f64 },
    #[error("|y| = {y} outside the steepest-descent domain (limit {limit})")]
    OutOfDomain { y: f64, limit: f64 },
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("regime violation: {}", .0.join("; "))]
    RegimeViolation(Vec<String>),
    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
