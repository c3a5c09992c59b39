use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} atoms but {1} weights")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("weights sum to zero")]
    ZeroMass,
    #[error("atom {index} has {found} coordinates, expected {expected}")]
    AtomDimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coordinate index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid copula: {0}")]
    InvalidCopula(String),
    #[error("the countermonotone bound is only a copula in dimension 2, requested n = {0}")]
    CountermonotoneDimension(usize),
    #[error("conditioning value {0} lies on a cell boundary")]
    CellBoundary(f64),

    #[error("invalid cost exponents p = {p}, q = {q}: both must be finite and >= 1")]
    InvalidCost { p: f64, q: f64 },
    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),
    #[error("problem has {pairs} atom pairs, above the cap of {cap}")]
    SizeCap { pairs: usize, cap: usize },
    #[error("network simplex did not converge within {0} pivots")]
    NoConvergence(usize),

    #[error("p = q: the quantile coupling is optimal, no counterexample exists")]
    EqualExponents,
    #[error("copula is extremal for this (p, q): no coordinate pair admits the construction")]
    NoViolatingPair,
    #[error("epsilon schedule exhausted without a positive gap (largest gap {})", .0.report.gap)]
    ScheduleExhausted(Box<crate::counterexample::GapSearch>),

    #[error("json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Json(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
