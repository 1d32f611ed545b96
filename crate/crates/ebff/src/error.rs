use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("nome {0} has modulus >= 1")]
    NomeOutOfRange(f64),
    #[error("product did not reach tail tolerance within {0} terms")]
    Overflow(usize),
    #[error("theta function evaluated at zero argument")]
    ZeroArgument,
    #[error("modulus must have positive imaginary part, got {0}")]
    BadModulus(f64),
    #[error("vanishing factor: {0}")]
    PoleHit(String),
    #[error("negative input {0}")]
    NegativeInput(i64),
    #[error("m must be positive, got {0}")]
    NonpositiveM(i64),
    #[error("index out of range: {0}")]
    RangeError(String),
    #[error("path tails disagree beyond depth {0}")]
    TailMismatch(usize),
    #[error("singular height: {0}")]
    SingularHeight(String),
    #[error("non-admissible configuration: {0}")]
    NonAdmissible(String),
    #[error("path enumeration exceeded budget of {0} paths")]
    CombinatorialBlowup(usize),
    #[error("commutator table gives unusable spectrum: {0}")]
    BadCommutators(String),
    #[error("boson spec missing entry: {0}")]
    SpecMissing(String),
    #[error("boson spec parse error on line {line}: {msg}")]
    SpecParse { line: usize, msg: String },
    #[error("no registered identity for operator pair {0}")]
    UnregisteredPair(String),
    #[error("contour annulus is empty: inner {inner} >= outer {outer}")]
    AnnulusEmpty { inner: f64, outer: f64 },
    #[error("quadrature node sits on a pole: {0}")]
    ContourOnPole(String),
}

pub type Result<T> = std::result::Result<T, Error>;
