use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition matrix must be square with size >= 2, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },

    #[error("transition matrix entries must be 0 or 1 (row {row}, column {col})")]
    NotBinary { row: usize, col: usize },

    #[error("symbol {symbol} has an empty row or column")]
    EmptyRowOrColumn { symbol: usize },

    #[error("transition matrix is not primitive (no positive power up to exponent {bound})")]
    NotPrimitive { bound: usize },

    #[error("graph is not irreducible")]
    NotIrreducible,

    #[error("enumeration would produce {count} words, above the cap of {cap}")]
    LengthOverflow { count: u128, cap: u128 },

    #[error("word {0} is not admissible")]
    Inadmissible(String),

    #[error("word {0} is not cyclically admissible")]
    NotCyclicallyAdmissible(String),

    #[error("invalid periodic point: {0}")]
    InvalidPeriodicPoint(String),

    #[error("invalid function: {0}")]
    InvalidFunction(String),

    #[error("invalid hole: {0}")]
    InvalidHole(String),

    #[error("power iteration did not converge after {iterations} iterations (bracket {bracket:e})")]
    NoConvergence { iterations: usize, bracket: f64 },

    #[error("open system has no surviving loop; every orbit escapes")]
    FullEscape,

    #[error("no discretization (m, delta) satisfies the integral constraint: {0}")]
    Infeasible(String),

    #[error("lower roof approximation is not positive on word {0}")]
    NonPositiveLower(String),

    #[error("hole depth {hole} exceeds suspension block depth {block}")]
    DepthMismatch { hole: usize, block: usize },

    #[error("point prefix exhausted after {0} symbols")]
    PrefixExhausted(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation-type failures: bad input, inconsistent structure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::NoConvergence { .. } | Error::Io(_))
    }
}
