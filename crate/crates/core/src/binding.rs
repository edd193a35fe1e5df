//! The binding function `h`: `K = H(r || PK_1 || ... || PK_m)` truncated to
//! its leftmost `n` bits, with `H` = SHA-512 and the sender keys sorted
//! lexicographically by their canonical bytes.
//!
//! Property 1 (second-preimage resistance over `(PK, r)`) rests on the
//! encoding being injective, which holds because `r` and every key have a
//! fixed length. Property 2 (`K` unpredictable without `r`) rests on `H`
//! behaving as a random function. If `H` is also partial-preimage resistant
//! in `r`, a leaked `K` does not reveal `r`; that is a property of SHA-512,
//! not something this module enforces.

use std::fmt;

use sha2::{Digest, Sha512};
use zeroize::Zeroizing;

use crate::crypto::PublicKey;
use crate::error::{Error, Result};

pub const MAX_OUTPUT_BITS: u32 = 512;

/// Validated input to `h`.
#[derive(Clone, PartialEq, Eq)]
pub struct HInput {
    public_keys: Vec<PublicKey>,
    r: Zeroizing<Vec<u8>>,
}

impl HInput {
    /// `public_keys` must be non-empty, strictly increasing and of one common
    /// length; `r` must be exactly `r_bits` long.
    pub fn new(public_keys: Vec<PublicKey>, r: &[u8], r_bits: u32) -> Result<Self> {
        if public_keys.is_empty() {
            return Err(Error::InvalidBindingInput("empty key list"));
        }
        let key_len = public_keys[0].len();
        if key_len == 0 || public_keys.iter().any(|pk| pk.len() != key_len) {
            return Err(Error::InvalidBindingInput("keys differ in length"));
        }
        for pair in public_keys.windows(2) {
            match pair[0].cmp(&pair[1]) {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => return Err(Error::InvalidBindingInput("duplicate key")),
                std::cmp::Ordering::Greater => return Err(Error::InvalidBindingInput("keys not sorted")),
            }
        }
        if r_bits == 0 || !r_bits.is_multiple_of(8) || r.len() * 8 != r_bits as usize {
            return Err(Error::InvalidBindingInput("wrong r length"));
        }
        Ok(Self {
            public_keys,
            r: Zeroizing::new(r.to_vec()),
        })
    }

    /// Sorts and deduplicates `public_keys` before validating.
    pub fn from_unordered(mut public_keys: Vec<PublicKey>, r: &[u8], r_bits: u32) -> Result<Self> {
        public_keys.sort();
        public_keys.dedup();
        Self::new(public_keys, r, r_bits)
    }

    pub fn public_keys(&self) -> &[PublicKey] {
        &self.public_keys
    }

    pub fn r(&self) -> &[u8] {
        &self.r
    }
}

impl fmt::Debug for HInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HInput")
            .field("public_keys", &self.public_keys)
            .field("r", &"<redacted>")
            .finish()
    }
}

/// `r || pk_1 || ... || pk_m`.
pub fn encode_h_input(input: &HInput) -> Vec<u8> {
    let key_bytes: usize = input.public_keys.iter().map(PublicKey::len).sum();
    let mut out = Vec::with_capacity(input.r.len() + key_bytes);
    out.extend_from_slice(&input.r);
    for pk in &input.public_keys {
        out.extend_from_slice(pk.as_bytes());
    }
    out
}

/// The shared secret `K`.
#[derive(Clone, PartialEq, Eq)]
pub struct SharedSecret(Zeroizing<Vec<u8>>);

impl SharedSecret {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self(Zeroizing::new(bytes.to_vec()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len_bits(&self) -> u32 {
        self.0.len() as u32 * 8
    }
}

impl fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SharedSecret({} bits, <redacted>)", self.len_bits())
    }
}

/// Leftmost `n_bits` of SHA-512 over the encoded input.
pub fn derive_k(input: &HInput, n_bits: u32) -> Result<SharedSecret> {
    if n_bits == 0 || n_bits > MAX_OUTPUT_BITS || !n_bits.is_multiple_of(8) {
        return Err(Error::InvalidSecretLength(n_bits));
    }
    let digest = Sha512::digest(encode_h_input(input));
    Ok(SharedSecret::from_bytes(&digest[..n_bits as usize / 8]))
}

/// Second-preimage resistance strength, in bits, of SHA-512 truncated to
/// `n` bits for messages of at most `max_input_len_bits` bits:
/// `floor(min{n, 512 - log2(L / 2^10)})`.
///
/// Computed in integers: `floor(522 - log2 L) = 522 - ceil(log2 L)`.
/// `L = 0` is treated as `L = 1`.
pub fn second_preimage_strength(n: u32, max_input_len_bits: u64) -> u32 {
    let len = max_input_len_bits.max(1);
    let ceil_log2 = u64::BITS - (len - 1).leading_zeros();
    let bound = (MAX_OUTPUT_BITS + 10) as i64 - ceil_log2 as i64;
    (n as i64).min(bound) as u32
}
