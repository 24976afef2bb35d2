use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NotPrime(u32),
    #[error("binary field exponent {0} outside 1..=16")]
    ExponentOutOfRange(u16),
    #[error("requested {requested} distinct elements from a field of order {order}")]
    ElementCount { requested: usize, order: u32 },
    #[error("value {value} is not an element of a field of order {order}")]
    ElementOutOfRange { value: u32, order: u32 },
    #[error("evaluation point {0} appears more than once")]
    RepeatedPoint(u16),
    #[error("expected {expected} known coordinates, got {got}")]
    KnownCount { expected: usize, got: usize },
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
    #[error("field of order {order} is too small, need at least {required} distinct elements")]
    FieldTooSmall { required: u64, order: u32 },
    #[error("sub-packetization {l} exceeds the configured cap {cap}")]
    SubPacketizationCap { l: u128, cap: u64 },
    #[error("incompatible codes: {0}")]
    Mismatch(String),
    #[error("dimension mismatch: expected {expected} symbols, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("need at least {need} columns to decode, got {got}")]
    TooFewColumns { need: usize, got: usize },
    #[error("repair protocol violation: {0}")]
    Protocol(String),
    #[error("code family cannot repair this failure pattern: {0}")]
    FamilyMismatch(String),
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("malformed data: {0}")]
    Format(String),
    #[error("checksum mismatch in shard {node}")]
    Checksum { node: usize },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn inadmissible(msg: impl Into<String>) -> Self {
        Error::Inadmissible(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
}
