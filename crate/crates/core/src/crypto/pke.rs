use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use hkdf::Hkdf;
use sha2::Sha512;
use x25519_dalek::{PublicKey as XPublic, StaticSecret};
use zeroize::Zeroizing;

use super::{Ciphertext, Drbg, PrivateKey, PublicKey, PublicKeyEncryption};
use crate::error::{Error, Result};

const KEY_LEN: usize = 32;
const WRAP_INFO: &[u8] = b"hbkex pke x25519 v1";

/// Hybrid public-key encryption: an ephemeral X25519 exchange, HKDF-SHA-512
/// over `(eph_pk || pk)`, and an AES-256-GCM wrap under the derived one-time
/// key. Ciphertext layout is `eph_pk (32) || gcm ciphertext || tag (16)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct X25519Hybrid;

fn wrap_key(shared: &[u8; 32], eph_pk: &[u8; 32], pk: &[u8; 32]) -> Zeroizing<[u8; 32]> {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(eph_pk);
    salt[32..].copy_from_slice(pk);
    let hk = Hkdf::<Sha512>::new(Some(&salt), shared);
    let mut okm = Zeroizing::new([0u8; 32]);
    hk.expand(WRAP_INFO, okm.as_mut())
        .expect("32 bytes is a valid HKDF length");
    okm
}

fn key_array(bytes: &[u8]) -> Result<[u8; KEY_LEN]> {
    bytes.try_into().map_err(|_| Error::InvalidKey)
}

impl PublicKeyEncryption for X25519Hybrid {
    fn public_key_len(&self) -> usize {
        KEY_LEN
    }

    fn keygen(&self, rng: &mut Drbg) -> (PublicKey, PrivateKey) {
        let secret = StaticSecret::from(rng.array::<KEY_LEN>());
        let public = XPublic::from(&secret);
        (
            PublicKey::from_bytes(public.as_bytes().to_vec()),
            PrivateKey::from_bytes(secret.to_bytes().to_vec()),
        )
    }

    fn encrypt(&self, pk: &PublicKey, plaintext: &[u8], rng: &mut Drbg) -> Result<Ciphertext> {
        let recipient = key_array(pk.as_bytes())?;
        let eph = StaticSecret::from(rng.array::<KEY_LEN>());
        let eph_pk = XPublic::from(&eph);
        let shared = eph.diffie_hellman(&XPublic::from(recipient));
        if !shared.was_contributory() {
            return Err(Error::InvalidKey);
        }
        let key = wrap_key(shared.as_bytes(), eph_pk.as_bytes(), &recipient);
        let cipher = Aes256Gcm::new_from_slice(key.as_ref()).expect("32-byte key");
        let body = cipher
            .encrypt(Nonce::from_slice(&[0u8; 12]), plaintext)
            .map_err(|_| Error::InvalidKey)?;
        let mut out = eph_pk.as_bytes().to_vec();
        out.extend_from_slice(&body);
        Ok(Ciphertext(out))
    }

    fn decrypt(&self, sk: &PrivateKey, ct: &Ciphertext) -> Result<Vec<u8>> {
        let secret = StaticSecret::from(key_array(sk.as_bytes())?);
        let recipient = XPublic::from(&secret);
        if ct.0.len() < KEY_LEN + 16 {
            return Err(Error::DecryptionFailed);
        }
        let (eph_pk, body) = ct.0.split_at(KEY_LEN);
        let eph_pk: [u8; KEY_LEN] = eph_pk.try_into().expect("split at key length");
        let shared = secret.diffie_hellman(&XPublic::from(eph_pk));
        if !shared.was_contributory() {
            return Err(Error::DecryptionFailed);
        }
        let key = wrap_key(shared.as_bytes(), &eph_pk, recipient.as_bytes());
        let cipher = Aes256Gcm::new_from_slice(key.as_ref()).expect("32-byte key");
        cipher
            .decrypt(Nonce::from_slice(&[0u8; 12]), Payload { msg: body, aad: &[] })
            .map_err(|_| Error::DecryptionFailed)
    }
}
