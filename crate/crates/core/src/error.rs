use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix must be square with {expected} rows, found {found}")]
    NotSquare { expected: usize, found: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("entry ({row}, {col}) = {value} outside [-1, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("diagonal entry {index} = {value}, expected 1")]
    NotUnitDiagonal { index: usize, value: f64 },
    #[error("correlation matrix is indefinite: eigenvalue {eigenvalue} below -1e-10 * {max}")]
    Indefinite { eigenvalue: f64, max: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("requested {requested} modes but only {available} are available")]
    RankExceeded { requested: usize, available: usize },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("control law kind mismatch: expected {expected}")]
    WrongLawKind { expected: &'static str },
    #[error("riccati blow-up for eigenvalue {lambda} at node {node}: {value} exceeds 10x comparison bound {bound}")]
    RiccatiBlowUp { lambda: f64, node: usize, value: f64, bound: f64 },
    #[error("non-finite value at node {node}, agent {agent}")]
    NonFinite { node: usize, agent: usize },
    #[error("negative optimality gap {gap} (centralized {centralized}, decentralized {decentralized})")]
    NegativeGap { gap: f64, centralized: f64, decentralized: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
