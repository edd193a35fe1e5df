//! Hash-binding key establishment.
//!
//! Phase I mirrors the certificate-based protocol but ships the bare sender
//! key `PK_A` instead of a certificate; no third-party key is involved on
//! the receiver side. Phase II transports a fresh `r` under `LK_B`, and both
//! ends compute `K = h(PK_A, r)`. Because `K` is bound to `PK_A`, messages
//! produced under any other signing key lead the receiver to a different `K`.
//!
//! With several interoperating senders the sorted set of their public keys
//! replaces the single `PK_A` as input to `h`.

use std::collections::BTreeMap;

use zeroize::Zeroizing;

use crate::binding::{derive_k, HInput, SharedSecret};
use crate::codec::{Reader, Writer};
use crate::crypto::{Ciphertext, Drbg, KeyPair, KeyPurpose, PrivateKey, PublicKey, SignedMessage, Suite, SymKey};
use crate::error::{Error, Result};
use crate::identity::Identity;
use crate::protocol_one::{open_transport, receiver_entries, seal_transport};
use crate::ttp::Directory;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P2Phase1Bundle {
    pub pk_a: PublicKey,
    pub signed_blob: SignedMessage,
}

impl P2Phase1Bundle {
    pub fn encode(&self, w: &mut Writer) {
        self.pk_a.encode(w);
        self.signed_blob.encode(w);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self {
            pk_a: PublicKey::decode(r)?,
            signed_blob: SignedMessage::decode(r)?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let b = Self::decode(&mut r)?;
        r.finish()?;
        Ok(b)
    }
}

/// Steps 3-4, run once per epoch by the shared head-end components: draw
/// `r` and compute `K = h(pk_set, r)`.
pub fn phase2_shared(
    suite: &Suite,
    pk_set: &[PublicKey],
    rng: &mut Drbg,
) -> Result<(Zeroizing<Vec<u8>>, SharedSecret)> {
    let n = suite.config().secret_len_bits;
    let r = Zeroizing::new(rng.bytes(suite.secret_len_bytes()));
    let input = HInput::new(pk_set.to_vec(), &r, n)?;
    let k = derive_k(&input, n)?;
    Ok((r, k))
}

#[derive(Debug, Clone)]
pub struct P2Sender {
    suite: Suite,
    id: Identity,
    sig_keys: KeyPair,
    directory: BTreeMap<Identity, PublicKey>,
    ltk_store: BTreeMap<Identity, SymKey>,
}

impl P2Sender {
    pub fn new(suite: Suite, id: Identity, sig_keys: KeyPair) -> Self {
        Self {
            suite,
            id,
            sig_keys,
            directory: BTreeMap::new(),
            ltk_store: BTreeMap::new(),
        }
    }

    /// Step 1 with a freshly generated pair. No third party is contacted.
    pub fn generate(suite: Suite, id: Identity, rng: &mut Drbg) -> Self {
        Self::new(suite, id, suite.keygen(KeyPurpose::Sig, rng))
    }

    /// New signing pair; long-term keys under the old one are dropped.
    pub fn rekey(&mut self, rng: &mut Drbg) {
        self.sig_keys = self.suite.keygen(KeyPurpose::Sig, rng);
        self.ltk_store.clear();
    }

    pub fn id(&self) -> Identity {
        self.id
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.sig_keys.public
    }

    /// The signing pair, exposed for compromise modelling.
    pub fn signing_keypair(&self) -> &KeyPair {
        &self.sig_keys
    }

    pub fn add_receiver(&mut self, id: Identity, public_key: PublicKey) {
        self.directory.insert(id, public_key);
    }

    /// Receiver keys from certificates that verify under `ttp_pk`; revoked
    /// receivers are left out.
    pub fn load_directory(&mut self, dir: &Directory, ttp_pk: &PublicKey) -> Result<()> {
        dir.crl.verify(&self.suite, ttp_pk)?;
        self.directory = receiver_entries(&self.suite, dir, ttp_pk)
            .into_iter()
            .filter(|(_, e)| !e.revoked)
            .map(|(id, e)| (id, e.public_key))
            .collect();
        Ok(())
    }

    pub fn ltk(&self, receiver: Identity) -> Option<&SymKey> {
        self.ltk_store.get(&receiver)
    }

    pub fn ltk_store(&self) -> &BTreeMap<Identity, SymKey> {
        &self.ltk_store
    }

    /// Steps 2a-2d.
    pub fn phase1(&mut self, receiver: Identity, rng: &mut Drbg) -> Result<P2Phase1Bundle> {
        let pk_b = self
            .directory
            .get(&receiver)
            .ok_or(Error::UnknownReceiver(receiver.0))?;
        let (lk, signed_blob) = seal_transport(&self.suite, &self.sig_keys, receiver, pk_b, rng)?;
        self.ltk_store.insert(receiver, lk);
        Ok(P2Phase1Bundle {
            pk_a: self.sig_keys.public.clone(),
            signed_blob,
        })
    }

    /// Step 5a: `e_{LK_B}(r)`.
    pub fn phase2(&self, receiver: Identity, r: &[u8]) -> Result<Ciphertext> {
        let lk = self.ltk_store.get(&receiver).ok_or(Error::NoLongTermKey)?;
        self.suite.sym_encrypt(lk, r)
    }
}

/// Receiver state: `SK_B` and the long-term keys it has accepted, each keyed
/// by the public key it arrived with. Holds no third-party key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P2Receiver {
    suite: Suite,
    id: Identity,
    sk_b: PrivateKey,
    ltk_by_sender: BTreeMap<PublicKey, SymKey>,
    active_pk_set: Vec<PublicKey>,
}

impl P2Receiver {
    pub fn new(suite: Suite, id: Identity, sk_b: PrivateKey) -> Self {
        Self {
            suite,
            id,
            sk_b,
            ltk_by_sender: BTreeMap::new(),
            active_pk_set: Vec::new(),
        }
    }

    pub fn id(&self) -> Identity {
        self.id
    }

    pub fn has_ltk_for(&self, sender_pk: &PublicKey) -> bool {
        self.ltk_by_sender.contains_key(sender_pk)
    }

    pub fn active_pk_set(&self) -> &[PublicKey] {
        &self.active_pk_set
    }

    /// Installs the key set used as `h` input. Sorted and deduplicated here;
    /// an empty set means "just the sender key of each message".
    pub fn set_active_pk_set(&mut self, mut keys: Vec<PublicKey>) -> Result<()> {
        keys.sort();
        keys.dedup();
        if let Some(first) = keys.first() {
            if keys.iter().any(|k| k.len() != first.len() || k.is_empty()) {
                return Err(Error::InvalidBindingInput("keys differ in length"));
            }
        }
        self.active_pk_set = keys;
        Ok(())
    }

    /// Steps 2e-2f. A second bundle under the same `PK_A` replaces the
    /// stored key. On failure the state is left as it was.
    pub fn phase1(&mut self, bundle: &P2Phase1Bundle) -> Result<()> {
        let lk = open_transport(&self.suite, self.id, &self.sk_b, &bundle.pk_a, &bundle.signed_blob)?;
        self.ltk_by_sender.insert(bundle.pk_a.clone(), lk);
        Ok(())
    }

    /// Steps 5c-5d: `r = d_{LK}(ct)`, `K = h(active set, r)`.
    pub fn phase2(&self, sender_pk: &PublicKey, ct: &Ciphertext) -> Result<SharedSecret> {
        let lk = self.ltk_by_sender.get(sender_pk).ok_or(Error::NoLongTermKey)?;
        let keys = if self.active_pk_set.is_empty() {
            vec![sender_pk.clone()]
        } else if self.active_pk_set.contains(sender_pk) {
            self.active_pk_set.clone()
        } else {
            return Err(Error::InactiveSender);
        };
        let r = Zeroizing::new(self.suite.sym_decrypt(lk, ct)?);
        let n = self.suite.config().secret_len_bits;
        if r.len() != self.suite.secret_len_bytes() {
            return Err(Error::DecryptionFailed);
        }
        derive_k(&HInput::new(keys, &r, n)?, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Suite, P2Sender, Vec<P2Receiver>, Drbg) {
        let suite = Suite::default();
        let mut rng = Drbg::new(b"p2 unit");
        let mut sender = P2Sender::generate(suite, Identity(500), &mut rng);
        let mut receivers = Vec::new();
        for i in 0..2 {
            let kp = suite.keygen(KeyPurpose::Pke, &mut rng);
            sender.add_receiver(Identity(i), kp.public.clone());
            receivers.push(P2Receiver::new(suite, Identity(i), kp.private));
        }
        (suite, sender, receivers, rng)
    }

    #[test]
    fn honest_round_trip() {
        let (suite, mut sender, mut receivers, mut rng) = setup();
        let bundle = sender.phase1(Identity(0), &mut rng).unwrap();
        suite.verify_recover(&bundle.pk_a, &bundle.signed_blob).unwrap();
        receivers[0].phase1(&bundle).unwrap();
        let (r, k) = phase2_shared(&suite, &[sender.public_key().clone()], &mut rng).unwrap();
        assert_eq!(r.len(), 16);
        assert_eq!(k.len_bits(), 128);
        let ct = sender.phase2(Identity(0), &r).unwrap();
        assert_eq!(receivers[0].phase2(sender.public_key(), &ct).unwrap(), k);
    }

    #[test]
    fn misaddressed_bundle_aborts() {
        let (_, mut sender, mut receivers, mut rng) = setup();
        let bundle = sender.phase1(Identity(1), &mut rng).unwrap();
        let before = receivers[0].clone();
        assert_eq!(receivers[0].phase1(&bundle), Err(Error::WrongRecipient));
        assert_eq!(receivers[0], before);
    }

    #[test]
    fn phase2_needs_ltk_and_active_sender() {
        let (_, mut sender, mut receivers, mut rng) = setup();
        assert_eq!(sender.phase2(Identity(0), &[0; 16]), Err(Error::NoLongTermKey));
        let bundle = sender.phase1(Identity(0), &mut rng).unwrap();
        receivers[0].phase1(&bundle).unwrap();
        let ct = sender.phase2(Identity(0), &[0; 16]).unwrap();
        let other = PublicKey::from_bytes(vec![0xee; 32]);
        assert_eq!(receivers[0].phase2(&other, &ct), Err(Error::NoLongTermKey));
        receivers[0].set_active_pk_set(vec![other]).unwrap();
        assert_eq!(
            receivers[0].phase2(sender.public_key(), &ct),
            Err(Error::InactiveSender)
        );
    }

    #[test]
    fn per_receiver_ciphertexts_differ() {
        let (_, mut sender, _, mut rng) = setup();
        sender.phase1(Identity(0), &mut rng).unwrap();
        sender.phase1(Identity(1), &mut rng).unwrap();
        let r = [5u8; 16];
        assert_ne!(
            sender.phase2(Identity(0), &r).unwrap(),
            sender.phase2(Identity(1), &r).unwrap()
        );
    }
}
