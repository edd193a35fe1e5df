use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] hbkex_core::Error),
    #[error("chip does not accept {0} messages")]
    UnsupportedChipMessage(&'static str),
    #[error("stale control word handle")]
    StaleHandle,
    #[error("unknown CA system index {0}")]
    UnknownCaSystem(usize),
    #[error("receiver {0} is not enrolled")]
    NotEnrolled(u64),
    #[error("receiver {0} has no channel key")]
    NotProvisioned(u64),
    #[error("{0}")]
    Config(String),
    #[error("scenario line {line}: {msg}")]
    Scenario { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, SimError>;
