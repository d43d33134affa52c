use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("out of range: {0}")]
    Range(String),

    #[error("length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid extractor parameters: {0}")]
    InvalidParams(String),

    #[error("invalid source descriptor: {0}")]
    InvalidSource(String),

    #[error("sources {0:?} and {1:?} were combined without an independence assertion")]
    NotIndependent(String, String),

    #[error("source {0:?} is not a secure source (min-entropy below length)")]
    NotSecure(String),

    #[error("exhaustive computation refused: {0}")]
    GuardExceeded(String),

    #[error("identical inputs have no collision probability")]
    IdenticalInputs,

    #[error("distribution is not normalized (sums to {0})")]
    NotNormalized(f64),

    #[error("odd total length required for the modified Toeplitz split, got {0}; drop one bit")]
    EvenTotalLength(u64),

    #[error("infeasible: short by {shortfall_bits} bits")]
    Infeasible { shortfall_bits: u64 },

    #[error("seed material too short: seed source has {seed_len} bits, input needs {needed}")]
    InsufficientSeedMaterial { seed_len: u64, needed: u64 },

    #[error("public seed must be generated after all keys exist")]
    OrderingViolation,

    #[error("requested {requested} output bits, bound allows {allowed}")]
    BudgetExceeded { requested: u64, allowed: i64 },

    #[error("unknown QKD key id {0}")]
    UnknownQkdId(u64),

    #[error("pad exhausted: need {needed} bits, {remaining} left")]
    PadExhausted { needed: usize, remaining: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
