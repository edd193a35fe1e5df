use thiserror::Error;

/// Errors produced by the primitives, the TTP and both key establishment protocols.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("unsupported scheme id {0:#04x}")]
    UnsupportedScheme(u8),
    #[error("invalid suite configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("truncated input at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed encoding at offset {offset}: {reason}")]
    Malformed { offset: usize, reason: &'static str },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("invalid key material")]
    InvalidKey,
    #[error("authenticated decryption failed")]
    DecryptionFailed,
    #[error("signature verification failed")]
    BadSignature,
    #[error("certificate rejected: {0}")]
    BadCertificate(&'static str),
    #[error("message not addressed to this receiver")]
    WrongRecipient,
    #[error("invalid binding input: {0}")]
    InvalidBindingInput(&'static str),
    #[error("invalid secret length: {0} bits")]
    InvalidSecretLength(u32),
    #[error("unknown receiver {0}")]
    UnknownReceiver(u64),
    #[error("receiver {0} is revoked")]
    RevokedReceiver(u64),
    #[error("no long-term key established")]
    NoLongTermKey,
    #[error("sender key is not in the active key set")]
    InactiveSender,
    #[error("identity {0} already registered")]
    DuplicateIdentity(u64),
    #[error("unknown certificate serial {0}")]
    UnknownSerial(u64),
}

pub type Result<T> = std::result::Result<T, Error>;
