//! The adversary: what it has stolen, what it has seen, and the messages it
//! can build from that.
//!
//! It reads every broadcast frame and every message on every chip channel.
//! Stolen material only ever comes from an explicit compromise.

use std::collections::BTreeMap;

use hbkex_core::codec::Reader;
use hbkex_core::crypto::{Drbg, KeyPair, KeyPurpose, PublicKey, Suite, SymKey};
use hbkex_core::protocol_one::P1Sender;
use hbkex_core::protocol_two::P2Sender;
use hbkex_core::ttp::{Certificate, Role};
use hbkex_core::wire::{Addressee, Ecm, Emm, EmmKind};
use hbkex_core::Identity;

use crate::decoder::{ChipMsg, ChipMsgKind, ClientSecrets};
use crate::error::{Result, SimError};
use crate::headend::{BroadcastFrame, CaProtocol};
use crate::scenario::ForgeKey;

/// Identity the adversary signs under when using its own key.
pub const ROGUE_SENDER_ID: Identity = Identity(0xad00);
/// First serial of certificates the adversary mints.
const ROGUE_SERIAL_BASE: u64 = 1 << 40;

/// Public facts about the target of a forgery.
#[derive(Debug, Clone)]
pub struct ForgeTarget {
    pub protocol: CaProtocol,
    pub ca_system_id: u16,
    pub receiver_id: Identity,
    /// `PK_B`, from the public TTP directory. Absent for legacy chips.
    pub receiver_pk: Option<PublicKey>,
    /// The CA system's current sender key, as broadcast.
    pub sender_pk: Option<PublicKey>,
    /// The shared key list, as broadcast.
    pub pk_set: Vec<PublicKey>,
    pub ttp_generation: u32,
}

#[derive(Debug, Clone)]
pub struct StolenSender {
    pub keys: KeyPair,
    pub certificate: Option<Certificate>,
}

#[derive(Debug)]
pub struct Adversary {
    suite: Suite,
    rng: Drbg,
    own_keys: KeyPair,
    next_serial: u64,
    ttp_keys: Vec<(u32, KeyPair)>,
    sender_keys: BTreeMap<usize, StolenSender>,
    clients: BTreeMap<usize, ClientSecrets>,
    /// `r` or `K` of the current epoch per CA system, read from ECMs.
    epoch_secrets: BTreeMap<u16, Vec<u8>>,
    known_k: Option<(u64, Vec<u8>)>,
    captured: BTreeMap<(usize, ChipMsgKind), ChipMsg>,
    broadcast_emms: BTreeMap<u16, Vec<u8>>,
    enroll_emms: BTreeMap<u64, Vec<u8>>,
}

impl Adversary {
    pub fn new(suite: Suite, mut rng: Drbg) -> Self {
        let own_keys = suite.keygen(KeyPurpose::Sig, &mut rng);
        Self {
            suite,
            rng,
            own_keys,
            next_serial: ROGUE_SERIAL_BASE,
            ttp_keys: Vec::new(),
            sender_keys: BTreeMap::new(),
            clients: BTreeMap::new(),
            epoch_secrets: BTreeMap::new(),
            known_k: None,
            captured: BTreeMap::new(),
            broadcast_emms: BTreeMap::new(),
            enroll_emms: BTreeMap::new(),
        }
    }

    pub fn own_public_key(&self) -> &PublicKey {
        &self.own_keys.public
    }

    pub fn steal_ttp_key(&mut self, generation: u32, keys: KeyPair) {
        self.ttp_keys.push((generation, keys));
    }

    pub fn steal_sender(&mut self, ca: usize, stolen: StolenSender) {
        self.sender_keys.insert(ca, stolen);
    }

    pub fn steal_client(&mut self, slot: usize, secrets: ClientSecrets) {
        self.clients.insert(slot, secrets);
    }

    /// A control word leaked from a decoder's output.
    pub fn learn_control_word(&mut self, epoch: u64, k: &[u8]) {
        self.known_k = Some((epoch, k.to_vec()));
    }

    pub fn known_control_word(&self, epoch: u64) -> Option<&[u8]> {
        match &self.known_k {
            Some((e, k)) if *e == epoch => Some(k),
            _ => None,
        }
    }

    /// The per-epoch secret of `ca_system_id`'s ECM, if a stolen group key opens it.
    pub fn epoch_secret(&self, ca_system_id: u16) -> Option<&[u8]> {
        self.epoch_secrets.get(&ca_system_id).map(Vec::as_slice)
    }

    /// Reads a broadcast frame: keeps the latest EMM of each class and
    /// opens whatever ECMs the stolen group keys allow.
    pub fn observe_frame(&mut self, frame: &BroadcastFrame) {
        for bytes in &frame.emms {
            let Ok(emm) = Emm::decode(bytes) else { continue };
            match (emm.kind, emm.addressee) {
                (EmmKind::PerReceiverEnroll, Addressee::Receiver(id)) => {
                    self.enroll_emms.insert(id.0, bytes.clone());
                }
                (kind, Addressee::Broadcast) if !kind.is_per_receiver() => {
                    self.broadcast_emms.insert(emm.ca_system_id, bytes.clone());
                }
                _ => {}
            }
        }
        if frame.ecms.is_empty() {
            return;
        }
        self.epoch_secrets.clear();
        for bytes in &frame.ecms {
            let Ok(ecm) = Ecm::decode(bytes) else { continue };
            let opened = self
                .clients
                .values()
                .filter(|c| c.keys.ca_system_id == ecm.ca_system_id)
                .find_map(|c| ecm.open(&self.suite, &c.keys.group).ok());
            if let Some(secret) = opened {
                self.epoch_secrets.insert(ecm.ca_system_id, secret.to_vec());
            }
        }
    }

    /// Records a genuine chip-channel message of decoder `slot`.
    pub fn observe_chip_msg(&mut self, slot: usize, msg: &ChipMsg) {
        self.captured.insert((slot, msg.kind), msg.clone());
    }

    pub fn captured(&self, slot: usize, kind: ChipMsgKind) -> Option<&ChipMsg> {
        self.captured.get(&(slot, kind))
    }

    pub fn captured_broadcast_emm(&self, ca_system_id: u16) -> Option<&[u8]> {
        self.broadcast_emms.get(&ca_system_id).map(Vec::as_slice)
    }

    pub fn captured_enroll_emm(&self, receiver: Identity) -> Option<&[u8]> {
        self.enroll_emms.get(&receiver.0).map(Vec::as_slice)
    }

    fn random_secret(&mut self) -> Vec<u8> {
        self.rng.bytes(self.suite.secret_len_bytes())
    }

    /// A derive message for `target` wrapped under a stolen `LK` copy for
    /// the target's current sender key (or a random key), carrying the
    /// best secret the adversary knows for this epoch.
    pub fn inject_derive(&mut self, target: &ForgeTarget, epoch: u64) -> Result<ChipMsg> {
        let lk = target
            .sender_pk
            .as_ref()
            .and_then(|pk| self.clients.values().find_map(|c| c.ltk_copies.get(pk).cloned()))
            .unwrap_or_else(|| SymKey::random(&self.suite, &mut self.rng));
        let secret = self.best_secret(target, epoch);
        let ct = self.suite.sym_encrypt(&lk, &secret)?;
        let pk = (target.protocol == CaProtocol::P2)
            .then_some(target.sender_pk.as_ref())
            .flatten();
        Ok(ChipMsg::derive(pk, &ct))
    }

    /// The known control word as a raw chip message, or random bytes.
    pub fn inject_control_word(&mut self, epoch: u64) -> ChipMsg {
        let k = match self.known_control_word(epoch) {
            Some(k) => k.to_vec(),
            None => self.random_secret(),
        };
        ChipMsg::control_word(&k)
    }

    /// `r` for hash-binding targets, `K` otherwise, random when unknown.
    fn best_secret(&mut self, target: &ForgeTarget, epoch: u64) -> Vec<u8> {
        let known = match target.protocol {
            CaProtocol::P2 => self.epoch_secret(target.ca_system_id).map(<[u8]>::to_vec),
            _ => self
                .epoch_secret(target.ca_system_id)
                .or_else(|| self.known_control_word(epoch))
                .map(<[u8]>::to_vec),
        };
        known.unwrap_or_else(|| self.random_secret())
    }

    /// Runs the sender side of Phase I and II as a rogue sender.
    ///
    /// `Stolen` signs with the compromised key of `ca`; `Own` signs with
    /// the adversary's key, certified with a stolen `SK_T` when one is
    /// available and self-signed otherwise.
    pub fn forge(&mut self, ca: usize, target: &ForgeTarget, key: ForgeKey, epoch: u64) -> Result<Vec<ChipMsg>> {
        let Some(receiver_pk) = target.receiver_pk.clone() else {
            return Ok(vec![self.inject_control_word(epoch)]);
        };
        let (signer, certificate, signer_id) = match key {
            ForgeKey::Stolen => {
                let stolen = self.sender_keys.get(&ca).ok_or_else(|| {
                    SimError::Config(format!(
                        "forge key=stolen before the sender keys of CA {ca} were compromised"
                    ))
                })?;
                let id = stolen.certificate.as_ref().map_or(ROGUE_SENDER_ID, |c| c.subject_id);
                (stolen.keys.clone(), stolen.certificate.clone(), id)
            }
            ForgeKey::Own => (self.own_keys.clone(), None, ROGUE_SENDER_ID),
        };
        let secret = self.best_secret(target, epoch);
        match target.protocol {
            CaProtocol::P2 => {
                let mut sender = P2Sender::new(self.suite, signer_id, signer.clone());
                sender.add_receiver(target.receiver_id, receiver_pk);
                let bundle = sender.phase1(target.receiver_id, &mut self.rng)?;
                let mut set: Vec<PublicKey> = target
                    .pk_set
                    .iter()
                    .filter(|pk| Some(*pk) != target.sender_pk.as_ref())
                    .cloned()
                    .collect();
                set.push(signer.public.clone());
                set.sort();
                let ct = sender.phase2(target.receiver_id, &secret)?;
                Ok(vec![
                    ChipMsg::load_ltk_p2(&bundle),
                    ChipMsg::pk_set(&set),
                    ChipMsg::derive(Some(&signer.public), &ct),
                ])
            }
            CaProtocol::P1 => {
                let cert = match certificate {
                    Some(c) => c,
                    None => self.mint_certificate(signer_id, &signer, target.ttp_generation)?,
                };
                let mut sender = P1Sender::new(self.suite, signer_id, signer, cert)?;
                sender.add_receiver(target.receiver_id, receiver_pk);
                let bundle = sender.phase1(target.receiver_id, &mut self.rng)?;
                let k = hbkex_core::binding::SharedSecret::from_bytes(&secret);
                let ct = sender.phase2(target.receiver_id, &k)?;
                Ok(vec![ChipMsg::load_ltk_p1(&bundle), ChipMsg::derive(None, &ct)])
            }
            CaProtocol::Legacy => Ok(vec![self.inject_control_word(epoch)]),
        }
    }

    /// A sender certificate for the adversary's key: signed with the most
    /// recently stolen `SK_T`, or by the key itself.
    fn mint_certificate(&mut self, id: Identity, subject: &KeyPair, generation: u32) -> Result<Certificate> {
        let serial = self.next_serial;
        self.next_serial += 1;
        let (signer, generation) = match self.ttp_keys.last() {
            Some((g, kp)) => (kp.clone(), *g),
            None => (subject.clone(), generation),
        };
        Ok(Certificate::issue(
            &self.suite,
            &signer,
            serial,
            id,
            Role::Sender,
            subject.public.clone(),
            generation,
        )?)
    }
}

/// Flips bit `bit mod 8*len` of `bytes`; no-op on empty input.
pub fn flip_bit(bytes: &mut [u8], bit: usize) {
    if bytes.is_empty() {
        return;
    }
    let bit = bit % (bytes.len() * 8);
    bytes[bit / 8] ^= 0x80 >> (bit % 8);
}

/// Byte length of the sender credential at the start of a Phase I
/// bundle: the certificate, or the length-prefixed bare key.
pub fn credential_len(protocol: CaProtocol, bundle: &[u8]) -> usize {
    let mut r = Reader::new(bundle);
    let ok = match protocol {
        CaProtocol::P1 => Certificate::decode(&mut r).is_ok(),
        _ => PublicKey::decode(&mut r).is_ok(),
    };
    if ok {
        r.offset()
    } else {
        bundle.len()
    }
}
