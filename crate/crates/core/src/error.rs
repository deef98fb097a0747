use thiserror::Error;

/// Errors raised by the library. Indices in messages are 0-based unless the
/// variant says otherwise.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("gamma is not Hermitian at ({i}, {j}): |Γij - conj(Γji)| = {deviation:e}")]
    NonHermitianGamma { i: usize, j: usize, deviation: f64 },
    #[error("{what} is not positive semidefinite: minimum eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemidefinite { what: String, min_eigenvalue: f64 },
    #[error("subsystem {subsystem} has an empty spectrum")]
    EmptySpectrum { subsystem: usize },
    #[error("subsystem {subsystem} eigenvalue {index} is not finite")]
    NonFiniteEigenvalue { subsystem: usize, index: usize },
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid environment populations: {0}")]
    InvalidPopulations(String),
    #[error("unknown multi-index: {0}")]
    UnknownMultiIndex(String),
    #[error("diagonal Hamiltonian term h[{subsystem}][{subsystem}] cannot be written with binary coupling indices (spectrum has {distinct} distinct eigenvalues)")]
    UnrepresentableDiagonal { subsystem: usize, distinct: usize },
    #[error("invalid measurement scheme: {0}")]
    InvalidScheme(String),
    #[error("conditional probability undefined: P(y) = {0:e}")]
    ConditionalUndefined(f64),
    #[error("coherence factor vanishes at t = {t}: |f| = {modulus:e}")]
    CoherenceZero { t: f64, modulus: f64 },
    #[error("canonical rate denominator vanishes at t = {t}")]
    DenominatorVanishes { t: f64 },
    #[error("canonical rate diverges at t = {t} (nearest pole at t = {pole})")]
    RateDivergence { t: f64, pole: f64 },
    #[error("dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("integrator did not converge: {0}")]
    NoConvergence(String),
    #[error("transposed generator identification failed: {0}")]
    IdentificationFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
