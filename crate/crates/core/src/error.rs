use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: operand lives on {found}, operator on {expected}")]
    GridMismatch { expected: String, found: String },

    #[error("field is not solenoidal: max |div B| = {residual:e} on the sample set")]
    NonSolenoidal { residual: f64 },

    #[error("the field has no vector potential: {0}")]
    NoGauge(String),

    #[error("evaluation at the excluded point x = 0")]
    ExcludedPoint,

    #[error("invalid quadrature settings: {0}")]
    InvalidQuadrature(String),

    #[error("dense assembly of dimension {dim} exceeds the cap {cap}")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("assembled operator is not Hermitian: max asymmetry {asymmetry:e}")]
    DenseAssembly { asymmetry: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error(
        "Krylov step did not converge at t = {time}: substep {substep:e}, \
         subspace {subspace}, error estimate {estimate:e}"
    )]
    KrylovNonConvergence {
        time: f64,
        substep: f64,
        subspace: usize,
        estimate: f64,
    },

    #[error("invalid time samples: {0}")]
    InvalidTimes(String),

    #[error("time samples are not uniformly spaced (deviation {0:e})")]
    NonUniformSteps(f64),

    #[error("trajectory too short: {needed} samples needed, {found} present")]
    ShortTrajectory { needed: usize, found: usize },

    #[error("invalid multiplier: {0}")]
    InvalidMultiplier(String),

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("massless operator with a nonzero bounded field part (sup |B2| = {0:e})")]
    MasslessWithBoundedField(f64),

    #[error("C0 = {0} violates C0 < 1/4")]
    HardyConstant(f64),

    #[error("constant {0} is infinite")]
    InfiniteConstant(&'static str),

    #[error("pair (p, q) = ({p}, {q}) is not {class} admissible: {relation}")]
    Inadmissible {
        p: String,
        q: String,
        class: &'static str,
        relation: String,
    },

    #[error("malformed spinor file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
