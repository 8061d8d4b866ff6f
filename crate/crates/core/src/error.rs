use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dimension {n} exceeds the dense solver cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("linear system is numerically singular")]
    SingularSystem,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("Cholesky factorization failed")]
    CholeskyFailure,
    #[error("numerical routine failed: {0}")]
    NumericalFailure(String),
    #[error("matrix is rank deficient")]
    RankDeficient,
    #[error("(A, F) is not a mean-square stable pair")]
    UnstablePair,
    #[error("symmetric residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    AsymmetryTooLarge { residual: f64, tol: f64 },
    #[error("gain-block condition violated: lambda_max = {0:.6e} is not negative")]
    GainConditionViolated(f64),
    #[error("not a bounded-real certificate: {0}")]
    NotACertificate(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("Wishart degrees {k} smaller than dimension {n}")]
    DegreesTooSmall { k: f64, n: usize },
    #[error("moment undefined: {0}")]
    MomentUndefined(String),
    #[error("unsupported distribution family: {0}")]
    UnsupportedFamily(String),
    #[error("state became non-finite at step {0}")]
    NonFiniteState(usize),
    #[error("propagated moments became non-finite")]
    NonFiniteMoments,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
