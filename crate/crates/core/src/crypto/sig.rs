use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};

use super::{Drbg, PrivateKey, PublicKey, SignatureScheme};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct Ed25519;

impl SignatureScheme for Ed25519 {
    fn public_key_len(&self) -> usize {
        32
    }

    fn keygen(&self, rng: &mut Drbg) -> (PublicKey, PrivateKey) {
        let sk = SigningKey::from_bytes(&rng.array());
        (
            PublicKey::from_bytes(sk.verifying_key().to_bytes().to_vec()),
            PrivateKey::from_bytes(sk.to_bytes().to_vec()),
        )
    }

    fn sign(&self, sk: &PrivateKey, message: &[u8]) -> Result<Vec<u8>> {
        let seed: [u8; 32] = sk.as_bytes().try_into().map_err(|_| Error::InvalidKey)?;
        Ok(SigningKey::from_bytes(&seed).sign(message).to_bytes().to_vec())
    }

    fn verify(&self, pk: &PublicKey, message: &[u8], signature: &[u8]) -> Result<()> {
        let pk: [u8; 32] = pk.as_bytes().try_into().map_err(|_| Error::BadSignature)?;
        let vk = VerifyingKey::from_bytes(&pk).map_err(|_| Error::BadSignature)?;
        let sig = Signature::from_slice(signature).map_err(|_| Error::BadSignature)?;
        vk.verify_strict(message, &sig).map_err(|_| Error::BadSignature)
    }
}
