//! Error type shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is not invertible as a matrix of rational functions")]
    SingularMetric,

    #[error("Kahler condition fails at (k,i,j) = ({0},{1},{2})")]
    NotKahler(usize, usize, usize),

    #[error("potential inconsistency at (i,j) = ({0},{1}): dbar_j(d_rho_i) != omega_{{i jbar}}")]
    PotentialMismatch(usize, usize),

    #[error("custom alpha form is not closed")]
    AlphaNotClosed,

    #[error("custom alpha data does not satisfy d(dbar_phi) = alpha")]
    AlphaPhiMismatch,

    #[error("chart dimension mismatch: section has n={0}, geometry has n={1}")]
    DimensionMismatch(usize, usize),

    #[error("evaluation level must be nonzero")]
    ZeroLevel,

    #[error("operation requires {expected} sections, got {found}")]
    HbarModeMismatch { expected: &'static str, found: &'static str },

    #[error("division by hbar leaves an hbar-free remainder: {0}")]
    HbarDivision(String),

    #[error("Fedosov residual is nonzero within truncation: {0}")]
    ResidualNonzero(String),

    #[error("Fedosov iteration did not stabilize within {0} passes")]
    NoFixpoint(usize),

    #[error("flat-section iteration failed certification: {0}")]
    FlatCertification(String),

    #[error("input is not holomorphic: depends on {0}")]
    NotHolomorphic(String),

    #[error("quantizability bound is not exact; refusing graded symbol")]
    BoundNotExact,

    #[error("operator extraction produced a non-holomorphic coefficient at {0}")]
    NonHolomorphicCoefficient(String),

    #[error("operator extraction system is inconsistent: {0}")]
    ExtractionInconsistent(String),

    #[error("Fock connection requires the Berezin-Toeplitz twist; got {0}")]
    IntegralityMismatch(String),

    #[error("level must be a positive integer for the Fock module; got {0}")]
    NonIntegralLevel(String),

    #[error("symmetry datum fails its invariant: {0}")]
    SymmetryInvariant(String),

    #[error("moment bracket identity fails on {0}")]
    MomentBracket(String),

    #[error("completion exists outside the rational coefficient class: {0}")]
    CompletionOutsideClass(String),

    #[error("truncation too small: {0}")]
    TruncationTooSmall(String),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("cache verification failed: {0}")]
    CacheInvalid(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
