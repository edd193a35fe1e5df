//! Key establishment for one-way broadcast receivers.
//!
//! Two protocols share one set of pluggable primitives ([`crypto`]):
//!
//! * [`protocol_one`]: long-term keys are transported under a sender
//!   certificate issued by a trusted third party; receivers hold the
//!   third party's public key and check every sender certificate against it.
//! * [`protocol_two`]: long-term keys are transported under a bare sender
//!   public key, and the shared secret is `K = h(PK_A, r)` so that it is
//!   bound to the sender key ([`binding`]). Receivers hold no third-party
//!   key at all.
//!
//! [`ttp`] issues receiver and sender certificates, keeps a revocation list
//! and supports key rotation; [`wire`] holds the ECM/EMM formats and the
//! protected channel between head-end CA components and decoder CA clients.

pub mod binding;
pub mod codec;
pub mod crypto;
pub mod error;
pub mod identity;
pub mod protocol_one;
pub mod protocol_two;
pub mod ttp;
pub mod vectors;
pub mod wire;

pub use error::{Error, Result};
pub use identity::Identity;
