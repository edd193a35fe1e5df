use std::fmt;

use crate::codec::{Reader, Writer};
use crate::error::Result;

/// Party identity, serialized as 8 bytes big-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Identity(pub u64);

impl Identity {
    pub const LEN: usize = 8;

    pub fn to_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn encode(self, w: &mut Writer) {
        w.u64(self.0);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        r.u64().map(Identity)
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Identity {
    fn from(v: u64) -> Self {
        Identity(v)
    }
}
