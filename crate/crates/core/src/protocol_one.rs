//! Certificate-based key establishment.
//!
//! Phase I: the sender `A` picks a long-term key `LK_B` for receiver `B`,
//! sends `S_{SK_T}(A, PK_A)` and `S_{SK_A}(B, E_{PK_B}(LK_B))`. `B` checks the
//! certificate under its installed `PK_T`, the signature under the certified
//! `PK_A`, that it is the intended recipient, and decrypts `LK_B`.
//!
//! Phase II: for each authorized receiver `A` sends `e_{LK_B}(K)`.

use std::collections::{BTreeMap, BTreeSet};

use crate::binding::SharedSecret;
use crate::codec::{Reader, Writer};
use crate::crypto::{Ciphertext, Drbg, KeyPair, KeyPurpose, PrivateKey, PublicKey, SignedMessage, Suite, SymKey};
use crate::error::{Error, Result};
use crate::identity::Identity;
use crate::ttp::{Certificate, Directory, Role, SignedCrl, Ttp};

/// The signed tuple `(B, E_{PK_B}(LK_B))`: 8-byte identity, then the
/// length-prefixed ciphertext.
pub(crate) fn encode_transport(receiver: Identity, wrapped: &Ciphertext) -> Vec<u8> {
    let mut w = Writer::new();
    receiver.encode(&mut w);
    w.bytes(wrapped.as_bytes());
    w.finish()
}

pub(crate) fn decode_transport(bytes: &[u8]) -> Result<(Identity, Ciphertext)> {
    let mut r = Reader::new(bytes);
    let id = Identity::decode(&mut r)?;
    let ct = Ciphertext(r.bytes()?.to_vec());
    r.finish()?;
    Ok((id, ct))
}

/// Receiver-side steps shared by both protocols once the signing key is
/// trusted: verify, check recipient, decrypt, check the key length.
pub(crate) fn open_transport(
    suite: &Suite,
    me: Identity,
    sk: &PrivateKey,
    sender_pk: &PublicKey,
    signed: &SignedMessage,
) -> Result<SymKey> {
    let tuple = suite.verify_recover(sender_pk, signed)?;
    let (addressee, wrapped) = decode_transport(&tuple)?;
    if addressee != me {
        return Err(Error::WrongRecipient);
    }
    let lk = suite.pke_decrypt(sk, &wrapped)?;
    if lk.len() != suite.secret_len_bytes() {
        return Err(Error::DecryptionFailed);
    }
    Ok(SymKey::from_bytes(&lk))
}

/// Sender-side steps shared by both protocols: fresh `LK`, wrap under
/// `PK_B`, sign the tuple.
pub(crate) fn seal_transport(
    suite: &Suite,
    signer: &KeyPair,
    receiver: Identity,
    receiver_pk: &PublicKey,
    rng: &mut Drbg,
) -> Result<(SymKey, SignedMessage)> {
    let lk = SymKey::random(suite, rng);
    let wrapped = suite.pke_encrypt(receiver_pk, lk.as_bytes(), rng)?;
    let signed = suite.sign(&signer.private, &encode_transport(receiver, &wrapped))?;
    Ok((lk, signed))
}

/// Obtains sender certificates; implemented by [`Ttp`].
pub trait CertifySender {
    fn certify_sender(&mut self, id: Identity, pk: PublicKey) -> Result<Certificate>;
}

impl CertifySender for Ttp {
    fn certify_sender(&mut self, id: Identity, pk: PublicKey) -> Result<Certificate> {
        Ttp::certify_sender(self, id, pk)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase1Bundle {
    pub sender_cert: Certificate,
    pub signed_blob: SignedMessage,
}

impl Phase1Bundle {
    pub fn encode(&self, w: &mut Writer) {
        self.sender_cert.encode(w);
        self.signed_blob.encode(w);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self {
            sender_cert: Certificate::decode(r)?,
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

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverEntry {
    pub public_key: PublicKey,
    pub revoked: bool,
}

#[derive(Debug, Clone)]
pub struct P1Sender {
    suite: Suite,
    id: Identity,
    sig_keys: KeyPair,
    cert: Certificate,
    directory: BTreeMap<Identity, ReceiverEntry>,
    ltk_store: BTreeMap<Identity, SymKey>,
}

impl P1Sender {
    pub fn new(suite: Suite, id: Identity, sig_keys: KeyPair, cert: Certificate) -> Result<Self> {
        if cert.subject_pk != sig_keys.public || cert.subject_role != Role::Sender || cert.subject_id != id {
            return Err(Error::BadCertificate("does not certify this sender"));
        }
        Ok(Self {
            suite,
            id,
            sig_keys,
            cert,
            directory: BTreeMap::new(),
            ltk_store: BTreeMap::new(),
        })
    }

    /// Steps 1-2: generate a signing pair and have it certified.
    pub fn generate(suite: Suite, id: Identity, rng: &mut Drbg, ca: &mut impl CertifySender) -> Result<Self> {
        let sig_keys = suite.keygen(KeyPurpose::Sig, rng);
        let cert = ca.certify_sender(id, sig_keys.public.clone())?;
        Self::new(suite, id, sig_keys, cert)
    }

    /// Replaces the signing pair with a freshly certified one. Existing
    /// long-term keys are dropped; Phase I has to run again.
    pub fn rekey(&mut self, rng: &mut Drbg, ca: &mut impl CertifySender) -> Result<()> {
        let fresh = Self::generate(self.suite, self.id, rng, ca)?;
        self.sig_keys = fresh.sig_keys;
        self.cert = fresh.cert;
        self.ltk_store.clear();
        Ok(())
    }

    pub fn id(&self) -> Identity {
        self.id
    }

    pub fn certificate(&self) -> &Certificate {
        &self.cert
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.sig_keys.public
    }

    /// The signing pair, exposed for compromise modelling.
    pub fn signing_keypair(&self) -> &KeyPair {
        &self.sig_keys
    }

    pub fn add_receiver(&mut self, id: Identity, public_key: PublicKey) {
        self.directory.insert(
            id,
            ReceiverEntry {
                public_key,
                revoked: false,
            },
        );
    }

    /// Rebuilds the receiver database from receiver certificates that verify
    /// under `ttp_pk`, marking revoked ones.
    pub fn load_directory(&mut self, dir: &Directory, ttp_pk: &PublicKey) -> Result<()> {
        dir.crl.verify(&self.suite, ttp_pk)?;
        self.directory = receiver_entries(&self.suite, dir, ttp_pk);
        Ok(())
    }

    pub fn receiver(&self, id: Identity) -> Option<&ReceiverEntry> {
        self.directory.get(&id)
    }

    pub fn ltk(&self, receiver: Identity) -> Option<&SymKey> {
        self.ltk_store.get(&receiver)
    }

    pub fn ltk_store(&self) -> &BTreeMap<Identity, SymKey> {
        &self.ltk_store
    }

    /// Steps 3a-3d.
    pub fn phase1(&mut self, receiver: Identity, rng: &mut Drbg) -> Result<Phase1Bundle> {
        let entry = self
            .directory
            .get(&receiver)
            .ok_or(Error::UnknownReceiver(receiver.0))?;
        if entry.revoked {
            return Err(Error::RevokedReceiver(receiver.0));
        }
        let (lk, signed_blob) = seal_transport(&self.suite, &self.sig_keys, receiver, &entry.public_key, rng)?;
        self.ltk_store.insert(receiver, lk);
        Ok(Phase1Bundle {
            sender_cert: self.cert.clone(),
            signed_blob,
        })
    }

    /// Step 4a: `e_{LK_B}(K)`.
    pub fn phase2(&self, receiver: Identity, k: &SharedSecret) -> Result<Ciphertext> {
        let lk = self.ltk_store.get(&receiver).ok_or(Error::NoLongTermKey)?;
        self.suite.sym_encrypt(lk, k.as_bytes())
    }
}

pub(crate) fn receiver_entries(
    suite: &Suite,
    dir: &Directory,
    ttp_pk: &PublicKey,
) -> BTreeMap<Identity, ReceiverEntry> {
    let mut out = BTreeMap::new();
    let ids: BTreeSet<Identity> = dir.receiver_certs.iter().map(|c| c.subject_id).collect();
    for id in ids {
        let Some(cert) = dir.receiver_cert(id) else { continue };
        if cert.subject_role != Role::Receiver || cert.verify(suite, ttp_pk).is_err() {
            continue;
        }
        out.insert(
            id,
            ReceiverEntry {
                public_key: cert.subject_pk.clone(),
                revoked: dir.is_revoked(cert.serial),
            },
        );
    }
    out
}

/// Receiver state. `pk_t` is fixed at initialization and never changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P1Receiver {
    suite: Suite,
    id: Identity,
    pk_t: PublicKey,
    sk_b: PrivateKey,
    ltk: Option<SymKey>,
    revoked: BTreeSet<u64>,
}

impl P1Receiver {
    pub fn new(suite: Suite, id: Identity, pk_t: PublicKey, sk_b: PrivateKey) -> Self {
        Self {
            suite,
            id,
            pk_t,
            sk_b,
            ltk: None,
            revoked: BTreeSet::new(),
        }
    }

    pub fn id(&self) -> Identity {
        self.id
    }

    pub fn trusted_key(&self) -> &PublicKey {
        &self.pk_t
    }

    pub fn has_ltk(&self) -> bool {
        self.ltk.is_some()
    }

    /// Installs revocation information signed under `PK_T`.
    pub fn apply_crl(&mut self, crl: &SignedCrl) -> Result<()> {
        crl.verify(&self.suite, &self.pk_t)?;
        self.revoked.extend(crl.serials.iter().copied());
        Ok(())
    }

    /// Steps 3e-3f. On any failure the state is left as it was.
    pub fn phase1(&mut self, bundle: &Phase1Bundle) -> Result<()> {
        let cert = &bundle.sender_cert;
        cert.verify(&self.suite, &self.pk_t)?;
        if cert.subject_role != Role::Sender {
            return Err(Error::BadCertificate("not a sender certificate"));
        }
        if self.revoked.contains(&cert.serial) {
            return Err(Error::BadCertificate("revoked"));
        }
        let lk = open_transport(&self.suite, self.id, &self.sk_b, &cert.subject_pk, &bundle.signed_blob)?;
        self.ltk = Some(lk);
        Ok(())
    }

    /// Step 4c.
    pub fn phase2(&self, ct: &Ciphertext) -> Result<SharedSecret> {
        let lk = self.ltk.as_ref().ok_or(Error::NoLongTermKey)?;
        let k = self.suite.sym_decrypt(lk, ct)?;
        if k.len() != self.suite.secret_len_bytes() {
            return Err(Error::DecryptionFailed);
        }
        Ok(SharedSecret::from_bytes(&k))
    }
}
