//! Trusted third party: receiver registration, certificate issuance,
//! revocation and rotation of the signing key pair `(SK_T, PK_T)`.
//!
//! The registry holds receiver *public* keys only. Rotating `(SK_T, PK_T)`
//! re-issues every receiver certificate under the new key and leaves the
//! registered receiver keys untouched.

use std::collections::{BTreeMap, BTreeSet};

use crate::codec::{Reader, Writer};
use crate::crypto::{Drbg, KeyPair, KeyPurpose, PublicKey, SignedMessage, Suite};
use crate::error::{Error, Result};
use crate::identity::Identity;

const CERT_LABEL: &[u8] = b"HBCERT1";
const CRL_LABEL: &[u8] = b"HBCRL1";
const DIRECTORY_MAGIC: &[u8; 4] = b"HBDR";
const STATE_MAGIC: &[u8; 4] = b"HBTS";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Role {
    Sender = 1,
    Receiver = 2,
}

impl TryFrom<u8> for Role {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Role::Sender),
            2 => Ok(Role::Receiver),
            _ => Err(Error::Malformed {
                offset: 0,
                reason: "unknown role",
            }),
        }
    }
}

/// `S_{SK_T}(subject, PK)` plus the serial, role and generation it was issued under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub serial: u64,
    pub subject_id: Identity,
    pub subject_role: Role,
    pub subject_pk: PublicKey,
    pub generation: u32,
    pub signature: SignedMessage,
}

fn cert_tbs(serial: u64, id: Identity, role: Role, pk: &PublicKey, generation: u32) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(CERT_LABEL).u64(serial);
    id.encode(&mut w);
    w.u8(role as u8);
    pk.encode(&mut w);
    w.u32(generation);
    w.finish()
}

impl Certificate {
    /// Signs a certificate with `signer`. The TTP uses this for every
    /// issuance; anyone holding a signing key can call it too.
    pub fn issue(
        suite: &Suite,
        signer: &KeyPair,
        serial: u64,
        subject_id: Identity,
        subject_role: Role,
        subject_pk: PublicKey,
        generation: u32,
    ) -> Result<Self> {
        let tbs = cert_tbs(serial, subject_id, subject_role, &subject_pk, generation);
        let signature = suite.sign(&signer.private, &tbs)?;
        Ok(Self {
            serial,
            subject_id,
            subject_role,
            subject_pk,
            generation,
            signature,
        })
    }

    /// Checks the signature under `ttp_pk` and that the signed tuple is
    /// exactly this certificate's fields.
    pub fn verify(&self, suite: &Suite, ttp_pk: &PublicKey) -> Result<()> {
        let recovered = suite
            .verify_recover(ttp_pk, &self.signature)
            .map_err(|_| Error::BadCertificate("signature"))?;
        let expected = cert_tbs(
            self.serial,
            self.subject_id,
            self.subject_role,
            &self.subject_pk,
            self.generation,
        );
        if recovered != expected {
            return Err(Error::BadCertificate("signed fields mismatch"));
        }
        Ok(())
    }

    /// Fields followed by the signature bytes; the signed message is rebuilt
    /// from the fields on decode.
    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.serial);
        self.subject_id.encode(w);
        w.u8(self.subject_role as u8);
        self.subject_pk.encode(w);
        w.u32(self.generation);
        w.bytes(&self.signature.signature);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let serial = r.u64()?;
        let subject_id = Identity::decode(r)?;
        let role_at = r.offset();
        let subject_role = Role::try_from(r.u8()?).map_err(|_| Error::Malformed {
            offset: role_at,
            reason: "unknown role",
        })?;
        let subject_pk = PublicKey::decode(r)?;
        let generation = r.u32()?;
        let signature = r.bytes()?.to_vec();
        Ok(Self {
            serial,
            subject_id,
            subject_role,
            signature: SignedMessage {
                message: cert_tbs(serial, subject_id, subject_role, &subject_pk, generation),
                signature,
            },
            subject_pk,
            generation,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let cert = Self::decode(&mut r)?;
        r.finish()?;
        Ok(cert)
    }
}

/// Revoked serials signed by the TTP key of `generation`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedCrl {
    pub generation: u32,
    pub serials: Vec<u64>,
    pub signature: SignedMessage,
}

fn crl_tbs(generation: u32, serials: &[u64]) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(CRL_LABEL).u32(generation).u32(serials.len() as u32);
    for s in serials {
        w.u64(*s);
    }
    w.finish()
}

impl SignedCrl {
    pub fn issue(suite: &Suite, signer: &KeyPair, generation: u32, serials: Vec<u64>) -> Result<Self> {
        let signature = suite.sign(&signer.private, &crl_tbs(generation, &serials))?;
        Ok(Self {
            generation,
            serials,
            signature,
        })
    }

    pub fn verify(&self, suite: &Suite, ttp_pk: &PublicKey) -> Result<()> {
        let recovered = suite
            .verify_recover(ttp_pk, &self.signature)
            .map_err(|_| Error::BadCertificate("crl signature"))?;
        if recovered != crl_tbs(self.generation, &self.serials) {
            return Err(Error::BadCertificate("crl fields mismatch"));
        }
        Ok(())
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u32(self.generation).u32(self.serials.len() as u32);
        for s in &self.serials {
            w.u64(*s);
        }
        w.bytes(&self.signature.signature);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let generation = r.u32()?;
        let count = r.u32()? as usize;
        if count > r.remaining() / 8 {
            return Err(r.malformed("crl count exceeds input"));
        }
        let serials = (0..count).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let signature = r.bytes()?.to_vec();
        Ok(Self {
            signature: SignedMessage {
                message: crl_tbs(generation, &serials),
                signature,
            },
            generation,
            serials,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let crl = Self::decode(&mut r)?;
        r.finish()?;
        Ok(crl)
    }
}

/// Immutable snapshot of the TTP's public state, as consumed by head-ends.
///
/// Layout: `"HBDR" || version(1) || u32 count || (u32 generation || lp(PK_T))*
/// || u32 count || cert* || u32 count || cert* || crl`, receiver
/// certificates before sender certificates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directory {
    pub generation_keys: Vec<(u32, PublicKey)>,
    pub receiver_certs: Vec<Certificate>,
    pub sender_certs: Vec<Certificate>,
    pub crl: SignedCrl,
}

impl Directory {
    pub fn current_generation(&self) -> u32 {
        self.generation_keys.last().map_or(0, |(g, _)| *g)
    }

    pub fn current_key(&self) -> Option<&PublicKey> {
        self.generation_keys.last().map(|(_, pk)| pk)
    }

    pub fn is_revoked(&self, serial: u64) -> bool {
        self.crl.serials.binary_search(&serial).is_ok()
    }

    /// Latest-generation certificate of a receiver, revoked or not.
    pub fn receiver_cert(&self, id: Identity) -> Option<&Certificate> {
        self.receiver_certs
            .iter()
            .filter(|c| c.subject_id == id)
            .max_by_key(|c| (c.generation, c.serial))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(DIRECTORY_MAGIC).u8(FORMAT_VERSION);
        w.u32(self.generation_keys.len() as u32);
        for (generation, pk) in &self.generation_keys {
            w.u32(*generation);
            pk.encode(&mut w);
        }
        for certs in [&self.receiver_certs, &self.sender_certs] {
            w.u32(certs.len() as u32);
            for cert in certs {
                cert.encode(&mut w);
            }
        }
        self.crl.encode(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.raw(4)? != DIRECTORY_MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(Error::BadVersion(version));
        }
        let n = r.u32()?;
        let mut generation_keys = Vec::new();
        for _ in 0..n {
            let generation = r.u32()?;
            generation_keys.push((generation, PublicKey::decode(&mut r)?));
        }
        let mut lists = [Vec::new(), Vec::new()];
        for list in lists.iter_mut() {
            let n = r.u32()?;
            for _ in 0..n {
                list.push(Certificate::decode(&mut r)?);
            }
        }
        let crl = SignedCrl::decode(&mut r)?;
        r.finish()?;
        let [receiver_certs, sender_certs] = lists;
        Ok(Self {
            generation_keys,
            receiver_certs,
            sender_certs,
            crl,
        })
    }
}

/// Issuance counters, used to show which flows involve the TTP at all.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TtpStats {
    pub receiver_certs_issued: u64,
    pub sender_certs_issued: u64,
    pub rotations: u64,
}

#[derive(Debug, Clone)]
pub struct Ttp {
    suite: Suite,
    keypair: KeyPair,
    generation_keys: Vec<PublicKey>,
    receivers: BTreeMap<Identity, PublicKey>,
    issued: Vec<Certificate>,
    crl: BTreeSet<u64>,
    next_serial: u64,
    stats: TtpStats,
}

impl Ttp {
    /// Fresh TTP at generation 1 with an empty registry.
    pub fn init(suite: Suite, rng: &mut Drbg) -> Self {
        let keypair = suite.keygen(KeyPurpose::Sig, rng);
        Self {
            suite,
            generation_keys: vec![keypair.public.clone()],
            keypair,
            receivers: BTreeMap::new(),
            issued: Vec::new(),
            crl: BTreeSet::new(),
            next_serial: 1,
            stats: TtpStats::default(),
        }
    }

    pub fn suite(&self) -> &Suite {
        &self.suite
    }

    pub fn generation(&self) -> u32 {
        self.generation_keys.len() as u32
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.keypair.public
    }

    pub fn generation_key(&self, generation: u32) -> Option<&PublicKey> {
        self.generation_keys.get(generation.checked_sub(1)? as usize)
    }

    pub fn stats(&self) -> TtpStats {
        self.stats
    }

    pub fn receivers(&self) -> &BTreeMap<Identity, PublicKey> {
        &self.receivers
    }

    pub fn issued(&self) -> &[Certificate] {
        &self.issued
    }

    pub fn crl(&self) -> &BTreeSet<u64> {
        &self.crl
    }

    /// The current signing pair. Exposed so a simulation can model theft of `SK_T`.
    pub fn signing_keypair(&self) -> &KeyPair {
        &self.keypair
    }

    fn issue(&mut self, id: Identity, role: Role, pk: PublicKey) -> Result<Certificate> {
        let cert = Certificate::issue(
            &self.suite,
            &self.keypair,
            self.next_serial,
            id,
            role,
            pk,
            self.generation(),
        )?;
        self.next_serial += 1;
        self.issued.push(cert.clone());
        match role {
            Role::Sender => self.stats.sender_certs_issued += 1,
            Role::Receiver => self.stats.receiver_certs_issued += 1,
        }
        Ok(cert)
    }

    pub fn register_receiver(&mut self, id: Identity, pk: PublicKey) -> Result<Certificate> {
        if self.receivers.contains_key(&id) {
            return Err(Error::DuplicateIdentity(id.0));
        }
        self.receivers.insert(id, pk.clone());
        self.issue(id, Role::Receiver, pk)
    }

    /// Issues a sender certificate under the current generation. A new key
    /// for an already certified sender supersedes (and revokes) the
    /// sender's earlier current-generation certificates.
    pub fn certify_sender(&mut self, id: Identity, pk: PublicKey) -> Result<Certificate> {
        let generation = self.generation();
        let live: Vec<&Certificate> = self
            .issued
            .iter()
            .filter(|c| {
                c.subject_role == Role::Sender
                    && c.subject_id == id
                    && c.generation == generation
                    && !self.crl.contains(&c.serial)
            })
            .collect();
        if live.iter().any(|c| c.subject_pk == pk) {
            return Err(Error::DuplicateIdentity(id.0));
        }
        let superseded: Vec<u64> = live.iter().map(|c| c.serial).collect();
        self.crl.extend(superseded);
        self.issue(id, Role::Sender, pk)
    }

    /// Adds `serial` to the revocation list. Revoking twice is a no-op.
    pub fn revoke(&mut self, serial: u64) -> Result<&BTreeSet<u64>> {
        if !self.issued.iter().any(|c| c.serial == serial) {
            return Err(Error::UnknownSerial(serial));
        }
        self.crl.insert(serial);
        Ok(&self.crl)
    }

    /// Revokes every certificate ever issued to sender `id`.
    pub fn revoke_sender(&mut self, id: Identity) -> Vec<u64> {
        let serials: Vec<u64> = self
            .issued
            .iter()
            .filter(|c| c.subject_role == Role::Sender && c.subject_id == id)
            .map(|c| c.serial)
            .collect();
        self.crl.extend(serials.iter().copied());
        serials
    }

    /// Replaces `(SK_T, PK_T)`, bumps the generation and re-issues all
    /// receiver certificates under the new key. Sender certificates are not
    /// re-issued; senders re-apply as if joining fresh.
    pub fn rotate(&mut self, rng: &mut Drbg) -> Result<Vec<Certificate>> {
        self.keypair = self.suite.keygen(KeyPurpose::Sig, rng);
        self.generation_keys.push(self.keypair.public.clone());
        self.stats.rotations += 1;
        let receivers: Vec<(Identity, PublicKey)> = self.receivers.iter().map(|(id, pk)| (*id, pk.clone())).collect();
        receivers
            .into_iter()
            .map(|(id, pk)| self.issue(id, Role::Receiver, pk))
            .collect()
    }

    pub fn signed_crl(&self) -> Result<SignedCrl> {
        SignedCrl::issue(
            &self.suite,
            &self.keypair,
            self.generation(),
            self.crl.iter().copied().collect(),
        )
    }

    pub fn export(&self) -> Result<Directory> {
        let (receiver_certs, sender_certs) = self
            .issued
            .iter()
            .cloned()
            .partition(|c| c.subject_role == Role::Receiver);
        Ok(Directory {
            generation_keys: self
                .generation_keys
                .iter()
                .enumerate()
                .map(|(i, pk)| (i as u32 + 1, pk.clone()))
                .collect(),
            receiver_certs,
            sender_certs,
            crl: self.signed_crl()?,
        })
    }

    /// Full state including `SK_T`, for persisting a TTP between CLI runs.
    pub fn to_state_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(STATE_MAGIC).u8(FORMAT_VERSION);
        w.u32(self.suite.config().secret_len_bits);
        w.bytes(self.keypair.private.as_bytes());
        w.u32(self.generation_keys.len() as u32);
        for pk in &self.generation_keys {
            pk.encode(&mut w);
        }
        w.u32(self.receivers.len() as u32);
        for (id, pk) in &self.receivers {
            id.encode(&mut w);
            pk.encode(&mut w);
        }
        w.u32(self.issued.len() as u32);
        for cert in &self.issued {
            cert.encode(&mut w);
        }
        w.u32(self.crl.len() as u32);
        for s in &self.crl {
            w.u64(*s);
        }
        w.u64(self.next_serial);
        w.finish()
    }

    pub fn from_state_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.raw(4)? != STATE_MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(Error::BadVersion(version));
        }
        let suite = Suite::new(crate::crypto::SuiteConfig::with_secret_len(r.u32()?)?)?;
        let private = crate::crypto::PrivateKey::from_bytes(r.bytes()?.to_vec());
        let mut generation_keys = Vec::new();
        for _ in 0..r.u32()? {
            generation_keys.push(PublicKey::decode(&mut r)?);
        }
        let public = generation_keys
            .last()
            .cloned()
            .ok_or_else(|| r.malformed("no generation keys"))?;
        let mut receivers = BTreeMap::new();
        for _ in 0..r.u32()? {
            let id = Identity::decode(&mut r)?;
            receivers.insert(id, PublicKey::decode(&mut r)?);
        }
        let mut issued = Vec::new();
        for _ in 0..r.u32()? {
            issued.push(Certificate::decode(&mut r)?);
        }
        let mut crl = BTreeSet::new();
        for _ in 0..r.u32()? {
            crl.insert(r.u64()?);
        }
        let next_serial = r.u64()?;
        r.finish()?;
        let keypair = KeyPair {
            public,
            private,
            scheme: crate::crypto::SchemeId::Sig(suite.config().sig),
        };
        keypair.self_test(&suite)?;
        let stats = TtpStats {
            receiver_certs_issued: issued.iter().filter(|c| c.subject_role == Role::Receiver).count() as u64,
            sender_certs_issued: issued.iter().filter(|c| c.subject_role == Role::Sender).count() as u64,
            rotations: generation_keys.len() as u64 - 1,
        };
        Ok(Self {
            suite,
            keypair,
            generation_keys,
            receivers,
            issued,
            crl,
            next_serial,
            stats,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Suite, Ttp, Drbg) {
        let suite = Suite::default();
        let mut rng = Drbg::new(b"ttp tests");
        let ttp = Ttp::init(suite, &mut rng);
        (suite, ttp, rng)
    }

    fn receiver_pk(suite: &Suite, rng: &mut Drbg) -> PublicKey {
        suite.keygen(KeyPurpose::Pke, rng).public
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let suite = Suite::default();
        let a = Ttp::init(suite, &mut Drbg::new(b"S"));
        let b = Ttp::init(suite, &mut Drbg::new(b"S"));
        let c = Ttp::init(suite, &mut Drbg::new(b"T"));
        assert_eq!(a.public_key(), b.public_key());
        assert_ne!(a.public_key(), c.public_key());
        assert_eq!(a.generation(), 1);
    }

    #[test]
    fn register_issues_verifiable_cert_and_rejects_duplicates() {
        let (suite, mut ttp, mut rng) = setup();
        let pk = receiver_pk(&suite, &mut rng);
        let cert = ttp.register_receiver(Identity(7), pk.clone()).unwrap();
        cert.verify(&suite, ttp.public_key()).unwrap();
        assert_eq!(cert.subject_pk, ttp.receivers()[&Identity(7)]);
        assert_eq!(cert.subject_pk.as_bytes(), pk.as_bytes());
        assert_eq!(ttp.register_receiver(Identity(7), pk), Err(Error::DuplicateIdentity(7)));
    }

    #[test]
    fn serials_are_unique() {
        let (suite, mut ttp, mut rng) = setup();
        for i in 0..5 {
            ttp.register_receiver(Identity(i), receiver_pk(&suite, &mut rng))
                .unwrap();
            let spk = suite.keygen(KeyPurpose::Sig, &mut rng).public;
            ttp.certify_sender(Identity(100 + i), spk).unwrap();
        }
        let serials: BTreeSet<u64> = ttp.issued().iter().map(|c| c.serial).collect();
        assert_eq!(serials.len(), ttp.issued().len());
    }

    #[test]
    fn revoke_is_idempotent_and_checks_serial() {
        let (suite, mut ttp, mut rng) = setup();
        let cert = ttp
            .register_receiver(Identity(1), receiver_pk(&suite, &mut rng))
            .unwrap();
        assert!(ttp.revoke(cert.serial).unwrap().contains(&cert.serial));
        assert_eq!(ttp.revoke(cert.serial).unwrap().len(), 1);
        assert_eq!(ttp.revoke(999), Err(Error::UnknownSerial(999)));
    }

    #[test]
    fn rotation_reissues_receivers_and_orphans_sender_certs() {
        let (suite, mut ttp, mut rng) = setup();
        let pk = receiver_pk(&suite, &mut rng);
        ttp.register_receiver(Identity(1), pk.clone()).unwrap();
        let spk = suite.keygen(KeyPurpose::Sig, &mut rng).public;
        let sender_cert = ttp.certify_sender(Identity(50), spk).unwrap();
        let registry_before = ttp.receivers().clone();

        let reissued = ttp.rotate(&mut rng).unwrap();
        assert_eq!(ttp.generation(), 2);
        assert_eq!(reissued.len(), 1);
        reissued[0].verify(&suite, ttp.public_key()).unwrap();
        assert_eq!(reissued[0].generation, 2);
        assert_eq!(ttp.receivers(), &registry_before);
        assert!(sender_cert.verify(&suite, ttp.public_key()).is_err());
        // Still valid under the generation it was issued in.
        sender_cert.verify(&suite, ttp.generation_key(1).unwrap()).unwrap();
    }

    #[test]
    fn new_sender_key_supersedes_old_cert() {
        let (suite, mut ttp, mut rng) = setup();
        let k1 = suite.keygen(KeyPurpose::Sig, &mut rng).public;
        let k2 = suite.keygen(KeyPurpose::Sig, &mut rng).public;
        let c1 = ttp.certify_sender(Identity(9), k1.clone()).unwrap();
        assert_eq!(ttp.certify_sender(Identity(9), k1), Err(Error::DuplicateIdentity(9)));
        let c2 = ttp.certify_sender(Identity(9), k2).unwrap();
        assert!(ttp.crl().contains(&c1.serial));
        assert!(!ttp.crl().contains(&c2.serial));
    }

    #[test]
    fn tampered_certificate_fields_fail_verification() {
        let (suite, mut ttp, mut rng) = setup();
        let cert = ttp
            .register_receiver(Identity(3), receiver_pk(&suite, &mut rng))
            .unwrap();
        let bytes = cert.to_bytes();
        for bit in 0..bytes.len() * 8 {
            let mut t = bytes.clone();
            t[bit / 8] ^= 1 << (bit % 8);
            if let Ok(c) = Certificate::from_bytes(&t) {
                assert!(c.verify(&suite, ttp.public_key()).is_err(), "bit {bit}");
            }
        }
    }

    #[test]
    fn directory_and_state_round_trip() {
        let (suite, mut ttp, mut rng) = setup();
        let cert = ttp
            .register_receiver(Identity(1), receiver_pk(&suite, &mut rng))
            .unwrap();
        ttp.revoke(cert.serial).unwrap();
        ttp.rotate(&mut rng).unwrap();
        let dir = ttp.export().unwrap();
        let back = Directory::decode(&dir.encode()).unwrap();
        assert_eq!(back, dir);
        back.crl.verify(&suite, ttp.public_key()).unwrap();
        assert!(back.is_revoked(cert.serial));
        assert_eq!(back.receiver_cert(Identity(1)).unwrap().generation, 2);

        let restored = Ttp::from_state_bytes(&ttp.to_state_bytes()).unwrap();
        assert_eq!(restored.export().unwrap(), dir);
    }
}
