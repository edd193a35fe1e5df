//! Pluggable primitives: public-key encryption, signatures, an authenticated
//! symmetric cipher, a 512-bit hash and the deterministic generator that
//! drives every random choice in the crate.
//!
//! Each primitive family is a trait; [`SuiteConfig`] names one registered
//! implementation per family by a one-byte scheme id, and [`Suite`] is the
//! dispatching front end the protocols are written against.

mod drbg;
mod pke;
mod sig;
mod sym;

use std::fmt;

use sha2::{Digest as _, Sha512};
use zeroize::Zeroizing;

pub use drbg::Drbg;
pub use pke::X25519Hybrid;
pub use sig::Ed25519;
pub use sym::{AesGcmSynthetic, SEAL_OVERHEAD};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const DIGEST_LEN: usize = 64;
pub type Digest = [u8; DIGEST_LEN];

macro_rules! scheme_id {
    ($(#[$m:meta])* $name:ident { $($(#[$vm:meta])* $variant:ident = $tag:expr),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[repr(u8)]
        pub enum $name {
            $($(#[$vm])* $variant = $tag),+
        }

        impl TryFrom<u8> for $name {
            type Error = Error;

            fn try_from(tag: u8) -> Result<Self> {
                match tag {
                    $($tag => Ok(Self::$variant),)+
                    other => Err(Error::UnsupportedScheme(other)),
                }
            }
        }

        impl From<$name> for u8 {
            fn from(id: $name) -> u8 {
                id as u8
            }
        }
    };
}

scheme_id!(
    /// Public-key encryption schemes.
    PkeSchemeId {
        /// X25519 key encapsulation, HKDF-SHA-512, AES-256-GCM wrap.
        X25519Hybrid = 0x01,
    }
);

scheme_id!(
    /// Signature schemes.
    SigSchemeId {
        Ed25519 = 0x01,
    }
);

scheme_id!(
    /// Symmetric authenticated ciphers. Key size follows the secret length.
    SymSchemeId {
        AesGcmSynthetic = 0x01,
    }
);

scheme_id!(
    HashId {
        Sha512 = 0x01,
    }
);

/// Secret lengths the suite accepts for long-term keys, control words and `r`.
pub const SECRET_LENGTHS: [u32; 3] = [128, 192, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteConfig {
    pub pke: PkeSchemeId,
    pub sig: SigSchemeId,
    pub sym: SymSchemeId,
    pub hash: HashId,
    pub secret_len_bits: u32,
}

impl Default for SuiteConfig {
    /// 128-bit secrets, the CSA v3 key length.
    fn default() -> Self {
        Self {
            pke: PkeSchemeId::X25519Hybrid,
            sig: SigSchemeId::Ed25519,
            sym: SymSchemeId::AesGcmSynthetic,
            hash: HashId::Sha512,
            secret_len_bits: 128,
        }
    }
}

impl SuiteConfig {
    pub fn with_secret_len(secret_len_bits: u32) -> Result<Self> {
        let cfg = Self {
            secret_len_bits,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a configuration from raw scheme tags.
    pub fn from_tags(pke: u8, sig: u8, sym: u8, hash: u8, secret_len_bits: u32) -> Result<Self> {
        let cfg = Self {
            pke: pke.try_into()?,
            sig: sig.try_into()?,
            sym: sym.try_into()?,
            hash: hash.try_into()?,
            secret_len_bits,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !SECRET_LENGTHS.contains(&self.secret_len_bits) {
            return Err(Error::InvalidSecretLength(self.secret_len_bits));
        }
        Ok(())
    }

    pub fn secret_len_bytes(&self) -> usize {
        self.secret_len_bits as usize / 8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyPurpose {
    Pke,
    Sig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeId {
    Pke(PkeSchemeId),
    Sig(SigSchemeId),
}

/// Canonical public key bytes. Ordered lexicographically, which is the
/// order used for multi-key binding input.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(Vec<u8>);

impl PublicKey {
    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.bytes(&self.0);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self(r.bytes()?.to_vec()))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey(")?;
        for b in self.0.iter().take(8) {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

/// Private key bytes. Zeroed on drop; never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey(Zeroizing<Vec<u8>>);

impl PrivateKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(Zeroizing::new(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
    pub scheme: SchemeId,
}

impl KeyPair {
    /// Round-trips a fixed message through the pair's scheme.
    pub fn self_test(&self, suite: &Suite) -> Result<()> {
        let probe = b"key pair self test";
        match self.scheme {
            SchemeId::Pke(_) => {
                let mut rng = Drbg::new(b"self-test");
                let ct = suite.pke_encrypt(&self.public, probe, &mut rng)?;
                if suite.pke_decrypt(&self.private, &ct)? != probe {
                    return Err(Error::InvalidKey);
                }
            }
            SchemeId::Sig(_) => {
                let sm = suite.sign(&self.private, probe)?;
                if suite.verify_recover(&self.public, &sm)? != probe {
                    return Err(Error::InvalidKey);
                }
            }
        }
        Ok(())
    }
}

/// Symmetric key of exactly the suite's secret length. Zeroed on drop.
#[derive(Clone, PartialEq, Eq)]
pub struct SymKey(Zeroizing<Vec<u8>>);

impl SymKey {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self(Zeroizing::new(bytes.to_vec()))
    }

    pub fn random(suite: &Suite, rng: &mut Drbg) -> Self {
        Self(Zeroizing::new(rng.bytes(suite.config().secret_len_bytes())))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext(pub Vec<u8>);

impl Ciphertext {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// Signature with appendix carrying the signed message, used where the
/// protocols call for message recovery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedMessage {
    pub message: Vec<u8>,
    pub signature: Vec<u8>,
}

impl SignedMessage {
    pub fn encode(&self, w: &mut Writer) {
        w.bytes(&self.message).bytes(&self.signature);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self {
            message: r.bytes()?.to_vec(),
            signature: r.bytes()?.to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let sm = Self::decode(&mut r)?;
        r.finish()?;
        Ok(sm)
    }
}

pub trait PublicKeyEncryption: Send + Sync {
    fn public_key_len(&self) -> usize;
    fn keygen(&self, rng: &mut Drbg) -> (PublicKey, PrivateKey);
    fn encrypt(&self, pk: &PublicKey, plaintext: &[u8], rng: &mut Drbg) -> Result<Ciphertext>;
    fn decrypt(&self, sk: &PrivateKey, ct: &Ciphertext) -> Result<Vec<u8>>;
}

pub trait SignatureScheme: Send + Sync {
    fn public_key_len(&self) -> usize;
    fn keygen(&self, rng: &mut Drbg) -> (PublicKey, PrivateKey);
    fn sign(&self, sk: &PrivateKey, message: &[u8]) -> Result<Vec<u8>>;
    fn verify(&self, pk: &PublicKey, message: &[u8], signature: &[u8]) -> Result<()>;
}

pub trait SymmetricCipher: Send + Sync {
    fn seal(&self, key: &[u8], aad: &[u8], plaintext: &[u8]) -> Result<Vec<u8>>;
    fn open(&self, key: &[u8], aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>>;
}

pub trait HashFunction: Send + Sync {
    fn digest(&self, data: &[u8]) -> Digest;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sha512Hash;

impl HashFunction for Sha512Hash {
    fn digest(&self, data: &[u8]) -> Digest {
        Sha512::digest(data).into()
    }
}

/// A validated [`SuiteConfig`] bound to its implementations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Suite {
    config: SuiteConfig,
}

impl Suite {
    pub fn new(config: SuiteConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &SuiteConfig {
        &self.config
    }

    pub fn secret_len_bytes(&self) -> usize {
        self.config.secret_len_bytes()
    }

    fn pke(&self) -> &'static dyn PublicKeyEncryption {
        match self.config.pke {
            PkeSchemeId::X25519Hybrid => &X25519Hybrid,
        }
    }

    fn sig(&self) -> &'static dyn SignatureScheme {
        match self.config.sig {
            SigSchemeId::Ed25519 => &Ed25519,
        }
    }

    fn sym(&self) -> &'static dyn SymmetricCipher {
        match self.config.sym {
            SymSchemeId::AesGcmSynthetic => &AesGcmSynthetic,
        }
    }

    fn hasher(&self) -> &'static dyn HashFunction {
        match self.config.hash {
            HashId::Sha512 => &Sha512Hash,
        }
    }

    pub fn public_key_len(&self, purpose: KeyPurpose) -> usize {
        match purpose {
            KeyPurpose::Pke => self.pke().public_key_len(),
            KeyPurpose::Sig => self.sig().public_key_len(),
        }
    }

    pub fn keygen(&self, purpose: KeyPurpose, rng: &mut Drbg) -> KeyPair {
        let ((public, private), scheme) = match purpose {
            KeyPurpose::Pke => (self.pke().keygen(rng), SchemeId::Pke(self.config.pke)),
            KeyPurpose::Sig => (self.sig().keygen(rng), SchemeId::Sig(self.config.sig)),
        };
        KeyPair {
            public,
            private,
            scheme,
        }
    }

    pub fn pke_encrypt(&self, pk: &PublicKey, plaintext: &[u8], rng: &mut Drbg) -> Result<Ciphertext> {
        self.pke().encrypt(pk, plaintext, rng)
    }

    pub fn pke_decrypt(&self, sk: &PrivateKey, ct: &Ciphertext) -> Result<Vec<u8>> {
        self.pke().decrypt(sk, ct)
    }

    pub fn sign(&self, sk: &PrivateKey, message: &[u8]) -> Result<SignedMessage> {
        if message.is_empty() {
            return Err(Error::Malformed {
                offset: 0,
                reason: "empty message",
            });
        }
        Ok(SignedMessage {
            message: message.to_vec(),
            signature: self.sig().sign(sk, message)?,
        })
    }

    /// Verifies `sm` under `pk` and hands back the carried message.
    pub fn verify_recover(&self, pk: &PublicKey, sm: &SignedMessage) -> Result<Vec<u8>> {
        self.sig().verify(pk, &sm.message, &sm.signature)?;
        Ok(sm.message.clone())
    }

    fn check_key(&self, key: &SymKey) -> Result<()> {
        if key.as_bytes().len() != self.secret_len_bytes() {
            return Err(Error::InvalidSecretLength(key.as_bytes().len() as u32 * 8));
        }
        Ok(())
    }

    pub fn sym_encrypt(&self, key: &SymKey, plaintext: &[u8]) -> Result<Ciphertext> {
        self.seal(key, &[], plaintext).map(Ciphertext)
    }

    pub fn sym_decrypt(&self, key: &SymKey, ct: &Ciphertext) -> Result<Vec<u8>> {
        self.open(key, &[], &ct.0)
    }

    /// Authenticated encryption with associated data under an n-bit key.
    pub fn seal(&self, key: &SymKey, aad: &[u8], plaintext: &[u8]) -> Result<Vec<u8>> {
        self.check_key(key)?;
        self.sym().seal(key.as_bytes(), aad, plaintext)
    }

    pub fn open(&self, key: &SymKey, aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>> {
        self.check_key(key)?;
        self.sym().open(key.as_bytes(), aad, ciphertext)
    }

    pub fn hash(&self, data: &[u8]) -> Digest {
        self.hasher().digest(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_tags_are_rejected() {
        assert_eq!(PkeSchemeId::try_from(0x7f), Err(Error::UnsupportedScheme(0x7f)));
        assert!(SuiteConfig::from_tags(1, 1, 1, 9, 128).is_err());
        assert!(SuiteConfig::from_tags(1, 1, 1, 1, 128).is_ok());
    }

    #[test]
    fn secret_length_restricted() {
        for n in SECRET_LENGTHS {
            assert!(SuiteConfig::with_secret_len(n).is_ok());
        }
        assert_eq!(SuiteConfig::with_secret_len(64), Err(Error::InvalidSecretLength(64)));
    }

    #[test]
    fn keygen_is_deterministic() {
        let suite = Suite::default();
        let a = suite.keygen(KeyPurpose::Pke, &mut Drbg::new(&[0; 32]));
        let b = suite.keygen(KeyPurpose::Pke, &mut Drbg::new(&[0; 32]));
        assert_eq!(a, b);
        assert_eq!(a.public.len(), suite.public_key_len(KeyPurpose::Pke));
    }

    #[test]
    fn distinct_seeds_give_distinct_keys() {
        let suite = Suite::default();
        let a = suite.keygen(KeyPurpose::Pke, &mut Drbg::new(b"S1"));
        let b = suite.keygen(KeyPurpose::Pke, &mut Drbg::new(b"S2"));
        assert_ne!(a.public, b.public);
    }

    #[test]
    fn key_pairs_pass_self_test() {
        let suite = Suite::default();
        let mut rng = Drbg::new(b"S1");
        for purpose in [KeyPurpose::Pke, KeyPurpose::Sig] {
            suite.keygen(purpose, &mut rng).self_test(&suite).unwrap();
        }
    }

    #[test]
    fn hash_vectors() {
        let suite = Suite::default();
        assert!(hex(&suite.hash(b"")).starts_with("cf83e1357eefb8bdf1542850d66d8007"));
        assert_ne!(suite.hash(b"m"), suite.hash(b"m\0"));
    }

    #[test]
    fn private_material_is_not_printed() {
        let suite = Suite::default();
        let kp = suite.keygen(KeyPurpose::Sig, &mut Drbg::new(b"k"));
        let shown = format!("{kp:?}");
        assert!(shown.contains("redacted"));
        assert!(!shown.contains(&hex(kp.private.as_bytes())));
    }

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}
