use aes::{Aes128, Aes192, Aes256};
use aes_gcm::aead::consts::U12;
use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{AesGcm, Nonce};
use sha2::{Digest, Sha512};

use super::SymmetricCipher;
use crate::error::{Error, Result};

const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;
const NONCE_LABEL: &[u8] = b"hbkex sym nonce v1";

/// AES-GCM (128/192/256 by key length) with a synthetic nonce: the first
/// 12 bytes of `SHA-512(label || key || aad || pt)`, each length-prefixed.
/// Output is `nonce || ciphertext || tag`. Deterministic; equal
/// `(key, aad, pt)` triples give equal ciphertexts.
#[derive(Debug, Clone, Copy, Default)]
pub struct AesGcmSynthetic;

fn synthetic_nonce(key: &[u8], aad: &[u8], pt: &[u8]) -> [u8; NONCE_LEN] {
    let mut h = Sha512::new();
    h.update(NONCE_LABEL);
    for part in [key, aad, pt] {
        h.update((part.len() as u32).to_be_bytes());
        h.update(part);
    }
    let digest = h.finalize();
    let mut nonce = [0u8; NONCE_LEN];
    nonce.copy_from_slice(&digest[..NONCE_LEN]);
    nonce
}

fn with_cipher<T>(key: &[u8], f: impl FnOnce(&dyn AeadOps) -> T) -> Result<T> {
    match key.len() {
        16 => Ok(f(
            &AesGcm::<Aes128, U12>::new_from_slice(key).map_err(|_| Error::InvalidKey)?
        )),
        24 => Ok(f(
            &AesGcm::<Aes192, U12>::new_from_slice(key).map_err(|_| Error::InvalidKey)?
        )),
        32 => Ok(f(
            &AesGcm::<Aes256, U12>::new_from_slice(key).map_err(|_| Error::InvalidKey)?
        )),
        _ => Err(Error::InvalidKey),
    }
}

trait AeadOps {
    fn enc(&self, nonce: &[u8; NONCE_LEN], aad: &[u8], pt: &[u8]) -> Option<Vec<u8>>;
    fn dec(&self, nonce: &[u8], aad: &[u8], ct: &[u8]) -> Option<Vec<u8>>;
}

impl<C: Aead> AeadOps for C
where
    C: aes_gcm::AeadCore<NonceSize = U12>,
{
    fn enc(&self, nonce: &[u8; NONCE_LEN], aad: &[u8], pt: &[u8]) -> Option<Vec<u8>> {
        self.encrypt(Nonce::from_slice(nonce), Payload { msg: pt, aad }).ok()
    }

    fn dec(&self, nonce: &[u8], aad: &[u8], ct: &[u8]) -> Option<Vec<u8>> {
        self.decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad }).ok()
    }
}

impl SymmetricCipher for AesGcmSynthetic {
    fn seal(&self, key: &[u8], aad: &[u8], plaintext: &[u8]) -> Result<Vec<u8>> {
        let nonce = synthetic_nonce(key, aad, plaintext);
        let body = with_cipher(key, |c| c.enc(&nonce, aad, plaintext))?.ok_or(Error::InvalidKey)?;
        let mut out = nonce.to_vec();
        out.extend_from_slice(&body);
        Ok(out)
    }

    fn open(&self, key: &[u8], aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>> {
        if ciphertext.len() < NONCE_LEN + TAG_LEN {
            return Err(Error::DecryptionFailed);
        }
        let (nonce, body) = ciphertext.split_at(NONCE_LEN);
        with_cipher(key, |c| c.dec(nonce, aad, body))?.ok_or(Error::DecryptionFailed)
    }
}

/// Bytes added by [`AesGcmSynthetic::seal`] on top of the plaintext.
pub const SEAL_OVERHEAD: usize = NONCE_LEN + TAG_LEN;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_key_sizes_round_trip() {
        for len in [16, 24, 32] {
            let key = vec![3u8; len];
            let ct = AesGcmSynthetic.seal(&key, b"hdr", b"payload").unwrap();
            assert_eq!(ct.len(), 7 + SEAL_OVERHEAD);
            assert_eq!(AesGcmSynthetic.open(&key, b"hdr", &ct).unwrap(), b"payload");
            assert!(AesGcmSynthetic.open(&key, b"hdX", &ct).is_err());
        }
    }

    #[test]
    fn odd_key_length_rejected() {
        assert_eq!(AesGcmSynthetic.seal(&[0; 20], b"", b"x"), Err(Error::InvalidKey));
    }
}
