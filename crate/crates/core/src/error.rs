use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("field modulus {0} is not a prime in [2, 257]")]
    InvalidModulus(u32),
    #[error("residue {value} out of range for q = {q}")]
    ResidueOutOfRange { value: u32, q: u16 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {index} out of range for words of length {len} over q = {q}")]
    IndexOutOfRange { index: u64, len: usize, q: u16 },
    #[error("word index does not fit in 64 bits (q = {q}, length {len})")]
    IndexOverflow { q: u16, len: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("codebook has {members} members but only {capacity} non-reserved words are available")]
    CodebookOverflow { members: u64, capacity: u64 },
    #[error("scale guard exceeded: {0}")]
    ScaleGuard(String),
    #[error("no encoder met the search bound after {attempts} attempts (best score {best_score}, bound {bound})")]
    SearchExhausted {
        attempts: u64,
        best_score: f64,
        bound: f64,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
