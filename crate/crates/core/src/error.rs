use thiserror::Error;

/// Errors raised while validating inputs or computing equilibria.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(
        "covariance is not symmetric positive definite \
         (min eigenvalue {min_eigenvalue:e}, asymmetry {asymmetry:e})"
    )]
    NonSpdCovariance { min_eigenvalue: f64, asymmetry: f64 },

    #[error("cost matrix must be diagonal with strictly positive entries")]
    NonDiagonalCost,

    #[error("noise rate does not vanish at the horizon (|rate(T)| = {terminal_rate:e})")]
    InadmissibleNoise { terminal_rate: f64 },

    #[error("dimension mismatch: {0}")]
    BadDimension(String),

    #[error("invalid parameter: {0}")]
    BadParameter(String),

    #[error("a stochastic process needs a seed to be realized")]
    BadSeed,

    #[error("paths live on different time grids")]
    GridMismatch,

    #[error("investor index {index} out of range for {count} investors")]
    BadIndex { index: usize, count: usize },

    #[error("conditioning time {t} is later than target time {s}")]
    TimeOrder { t: f64, s: f64 },

    #[error("process kind has no closed-form conditional mean")]
    UnsupportedKind,

    #[error("heterogeneous risk tolerances are only supported with two investors")]
    UnequalToleranceUnsupported,

    #[error("expected exactly two investors, got {0}")]
    WrongInvestorCount(usize),

    #[error("eigendecomposition failed: {0}")]
    SpectralFailure(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error(
        "best-response iteration did not converge after {iterations} iterations \
         (contraction ratio {contraction:.4})"
    )]
    NoConvergence { iterations: usize, contraction: f64 },

    #[error("KKT matrix of the discretized problem is not positive definite at block {block}")]
    SingularKkt { block: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
