use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} does not lie on the {domain} domain")]
    DomainMismatch { domain: String, point: [f64; 3] },

    #[error("invalid exponent p = {0}; expected p >= 1 or p = infinity")]
    InvalidExponent(f64),

    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("ellipticity violated: coefficient minimum {min} is not positive")]
    EllipticityViolation { min: f64 },

    #[error(
        "iteration did not converge: worst residual {residual:.3e} after {iterations} iterations"
    )]
    ConvergenceFailure { residual: f64, iterations: usize },

    #[error("basis holds {available} eigenpairs but {required} are required")]
    InsufficientBasis { required: usize, available: usize },

    #[error("field vanishes identically on the grid; its zero set is not a curve")]
    DegenerateField,

    #[error("component {id} has zero measured boundary length")]
    DegenerateComponent { id: usize },

    #[error("field has negative value {value} at node {node}; not a density")]
    NotADensity { node: usize, value: f64 },

    #[error("measures are unbalanced: masses {mu} and {nu}")]
    UnbalancedMeasures { mu: f64, nu: f64 },

    #[error(
        "combined support {support} exceeds the exact-solver cap {cap}; use the regularized solver"
    )]
    UseRegularizedSolver { support: usize, cap: usize },

    #[error("field is not balanced: integral {integral:.3e} against L1 norm {l1:.3e}")]
    UnbalancedField { integral: f64, l1: f64 },

    #[error(
        "field is not orthogonal to the first {n} modes: relative coefficient {coefficient:.3e}"
    )]
    NotOrthogonal { n: usize, coefficient: f64 },

    #[error("invalid spectrum: eigenvalue {0} must be positive")]
    InvalidSpectrum(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("lemma precondition eps <= sqrt(area)/8 violated (eps = {eps}, limit = {limit}); measured ratio {ratio}")]
    PreconditionViolated { eps: f64, limit: f64, ratio: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
