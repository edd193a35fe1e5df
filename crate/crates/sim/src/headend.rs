//! Head-end: one or more CA systems sharing a random number generator and
//! the binding function, a content scrambler, and authorization state.
//!
//! With at least one hash-binding system present every epoch draws `r` and
//! sets `K = h(pk_set, r)`; otherwise `K` is drawn directly. Hash-binding
//! systems put `r` in their ECMs, all others put `K`.
//!
//! Nothing here takes input from a receiver: the channel is one-way.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use hbkex_core::binding::SharedSecret;
use hbkex_core::codec::{Reader, Writer};
use hbkex_core::crypto::{Drbg, KeyPair, PublicKey, Suite, SymKey};
use hbkex_core::protocol_one::P1Sender;
use hbkex_core::protocol_two::{phase2_shared, P2Sender};
use hbkex_core::ttp::{Certificate, Directory, SignedCrl, Ttp};
use hbkex_core::wire::{Addressee, CaChannelKeys, ClientChannelKeys, Ecm, Emm, EmmPayload};
use hbkex_core::Identity;

use crate::error::{Result, SimError};
use crate::scrambler::ContentScrambler;

pub const CA_SYSTEM_BASE: u16 = 0x0b00;
pub const SENDER_ID_BASE: u64 = 0x5e00;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaProtocol {
    P1,
    P2,
    Legacy,
}

impl CaProtocol {
    pub fn name(self) -> &'static str {
        match self {
            CaProtocol::P1 => "p1",
            CaProtocol::P2 => "p2",
            CaProtocol::Legacy => "legacy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "p1" => Some(CaProtocol::P1),
            "p2" => Some(CaProtocol::P2),
            "legacy" => Some(CaProtocol::Legacy),
            _ => None,
        }
    }
}

impl fmt::Display for CaProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
enum SenderState {
    P1(P1Sender),
    P2(P2Sender),
    Legacy,
}

#[derive(Debug, Clone)]
pub struct CaSystem {
    id: u16,
    protocol: CaProtocol,
    sender: SenderState,
    channel: CaChannelKeys,
    enrolled: BTreeSet<Identity>,
    authorized: BTreeSet<Identity>,
}

impl CaSystem {
    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn protocol(&self) -> CaProtocol {
        self.protocol
    }

    pub fn enrolled(&self) -> &BTreeSet<Identity> {
        &self.enrolled
    }

    pub fn authorized(&self) -> &BTreeSet<Identity> {
        &self.authorized
    }

    pub fn sender_public_key(&self) -> Option<&PublicKey> {
        match &self.sender {
            SenderState::P1(s) => Some(s.public_key()),
            SenderState::P2(s) => Some(s.public_key()),
            SenderState::Legacy => None,
        }
    }

    pub fn sender_certificate(&self) -> Option<&Certificate> {
        match &self.sender {
            SenderState::P1(s) => Some(s.certificate()),
            _ => None,
        }
    }

    /// The signing pair, exposed for compromise modelling.
    pub fn sender_signing_keypair(&self) -> Option<&KeyPair> {
        match &self.sender {
            SenderState::P1(s) => Some(s.signing_keypair()),
            SenderState::P2(s) => Some(s.signing_keypair()),
            SenderState::Legacy => None,
        }
    }

    /// The current group key, exposed for compromise modelling.
    pub fn group_key(&self) -> &SymKey {
        &self.channel.group
    }

    fn ltk(&self, id: Identity) -> Option<&SymKey> {
        match &self.sender {
            SenderState::P1(s) => s.ltk(id),
            SenderState::P2(s) => s.ltk(id),
            SenderState::Legacy => None,
        }
    }
}

/// One broadcast frame. There is deliberately no field for anything a
/// receiver could send back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastFrame {
    pub epoch: u64,
    pub scrambled_content: Vec<u8>,
    pub ecms: Vec<Vec<u8>>,
    pub emms: Vec<Vec<u8>>,
}

pub const FRAME_MAGIC: &[u8; 4] = b"HBFR";

impl BroadcastFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(FRAME_MAGIC).u8(1).u64(self.epoch).bytes(&self.scrambled_content);
        for list in [&self.ecms, &self.emms] {
            w.u32(list.len() as u32);
            for m in list {
                w.bytes(m);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> hbkex_core::Result<Self> {
        let mut r = Reader::new(bytes);
        if r.raw(4)? != FRAME_MAGIC {
            return Err(hbkex_core::Error::BadMagic);
        }
        let version = r.u8()?;
        if version != 1 {
            return Err(hbkex_core::Error::BadVersion(version));
        }
        let epoch = r.u64()?;
        let scrambled_content = r.bytes()?.to_vec();
        let mut lists = [Vec::new(), Vec::new()];
        for list in lists.iter_mut() {
            let n = r.u32()? as usize;
            if n > r.remaining() / 4 {
                return Err(r.malformed("message count exceeds input"));
            }
            for _ in 0..n {
                list.push(r.bytes()?.to_vec());
            }
        }
        r.finish()?;
        let [ecms, emms] = lists;
        Ok(Self {
            epoch,
            scrambled_content,
            ecms,
            emms,
        })
    }
}

#[derive(Debug)]
pub struct Headend {
    suite: Suite,
    shared_rng: Drbg,
    key_rng: Drbg,
    epoch: u64,
    systems: Vec<CaSystem>,
    pk_set: Vec<PublicKey>,
    pending: Vec<Emm>,
    control_word: Option<SharedSecret>,
    directory: Option<(Directory, PublicKey)>,
}

impl Headend {
    pub fn new(suite: Suite, rng: &mut Drbg) -> Self {
        Self {
            suite,
            shared_rng: rng.fork(b"shared components"),
            key_rng: rng.fork(b"head-end keys"),
            epoch: 0,
            systems: Vec::new(),
            pk_set: Vec::new(),
            pending: Vec::new(),
            control_word: None,
            directory: None,
        }
    }

    pub fn suite(&self) -> &Suite {
        &self.suite
    }

    /// The epoch the next [`Headend::epoch_tick`] will broadcast.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn systems(&self) -> &[CaSystem] {
        &self.systems
    }

    pub fn system(&self, ca: usize) -> Result<&CaSystem> {
        self.systems.get(ca).ok_or(SimError::UnknownCaSystem(ca))
    }

    fn system_mut(&mut self, ca: usize) -> Result<&mut CaSystem> {
        self.systems.get_mut(ca).ok_or(SimError::UnknownCaSystem(ca))
    }

    /// Sorted public keys of every hash-binding system; the `h` key list.
    pub fn pk_set(&self) -> &[PublicKey] {
        &self.pk_set
    }

    /// `K` of the last broadcast epoch. White-box access used to model a
    /// leaked control word and to check results in tests.
    pub fn current_control_word(&self) -> Option<&SharedSecret> {
        self.control_word.as_ref()
    }

    /// The long-term key the sender side holds for `id`. White-box, tests only.
    pub fn sender_ltk(&self, ca: usize, id: Identity) -> Option<&SymKey> {
        self.systems.get(ca)?.ltk(id)
    }

    pub fn pending_emms(&self) -> usize {
        self.pending.len()
    }

    pub fn add_ca_system(&mut self, protocol: CaProtocol, ttp: &mut Ttp) -> Result<usize> {
        let index = self.systems.len();
        let sender_id = Identity(SENDER_ID_BASE + index as u64);
        let sender = match protocol {
            CaProtocol::P1 => SenderState::P1(P1Sender::generate(self.suite, sender_id, &mut self.key_rng, ttp)?),
            CaProtocol::P2 => SenderState::P2(P2Sender::generate(self.suite, sender_id, &mut self.key_rng)),
            CaProtocol::Legacy => SenderState::Legacy,
        };
        let group = SymKey::random(&self.suite, &mut self.key_rng);
        self.systems.push(CaSystem {
            id: CA_SYSTEM_BASE + index as u16,
            protocol,
            sender,
            channel: CaChannelKeys {
                group,
                per_receiver: BTreeMap::new(),
            },
            enrolled: BTreeSet::new(),
            authorized: BTreeSet::new(),
        });
        if let Some((dir, pk)) = self.directory.clone() {
            self.load_sender_directory(index, &dir, &pk)?;
        }
        self.announce(index)?;
        if protocol == CaProtocol::P2 {
            self.refresh_pk_set()?;
        }
        Ok(index)
    }

    fn load_sender_directory(&mut self, ca: usize, dir: &Directory, ttp_pk: &PublicKey) -> Result<()> {
        match &mut self.system_mut(ca)?.sender {
            SenderState::P1(s) => s.load_directory(dir, ttp_pk)?,
            SenderState::P2(s) => s.load_directory(dir, ttp_pk)?,
            SenderState::Legacy => {}
        }
        Ok(())
    }

    /// Installs a TTP directory snapshot in every sender.
    pub fn load_directory(&mut self, dir: &Directory, ttp_pk: &PublicKey) -> Result<()> {
        for ca in 0..self.systems.len() {
            self.load_sender_directory(ca, dir, ttp_pk)?;
        }
        self.directory = Some((dir.clone(), ttp_pk.clone()));
        Ok(())
    }

    /// Queues the broadcast EMM carrying the sender's certificate or key.
    fn announce(&mut self, ca: usize) -> Result<()> {
        let sys = self.system(ca)?;
        let payload = match &sys.sender {
            SenderState::P1(s) => EmmPayload::Cert(s.certificate().clone()),
            SenderState::P2(s) => EmmPayload::SenderPk(s.public_key().clone()),
            SenderState::Legacy => return Ok(()),
        };
        let emm = payload.seal(&self.suite, &sys.channel.group, sys.id, Addressee::Broadcast)?;
        self.pending.push(emm);
        Ok(())
    }

    /// Recomputes the shared key list; with more than one hash-binding
    /// system every one of them broadcasts the full set.
    fn refresh_pk_set(&mut self) -> Result<()> {
        let mut set: Vec<PublicKey> = self
            .systems
            .iter()
            .filter(|s| s.protocol == CaProtocol::P2)
            .filter_map(|s| s.sender_public_key().cloned())
            .collect();
        set.sort();
        set.dedup();
        self.pk_set = set;
        if self.pk_set.len() > 1 {
            for ca in 0..self.systems.len() {
                let sys = &self.systems[ca];
                if sys.protocol != CaProtocol::P2 {
                    continue;
                }
                let emm = EmmPayload::PkSet(self.pk_set.clone()).seal(
                    &self.suite,
                    &sys.channel.group,
                    sys.id,
                    Addressee::Broadcast,
                )?;
                self.pending.push(emm);
            }
        }
        Ok(())
    }

    /// Creates the per-receiver channel key for `id`, delivered out of band
    /// with the CA client.
    pub fn provision_receiver(&mut self, ca: usize, id: Identity) -> Result<ClientChannelKeys> {
        let key = SymKey::random(&self.suite, &mut self.key_rng);
        let sys = self.system_mut(ca)?;
        sys.channel.per_receiver.insert(id, key);
        Ok(client_keys(sys, id).expect("just inserted"))
    }

    /// What a freshly installed CA client for `id` is provisioned with.
    pub fn client_keys(&self, ca: usize, id: Identity) -> Result<ClientChannelKeys> {
        client_keys(self.system(ca)?, id).ok_or(SimError::NotProvisioned(id.0))
    }

    /// Removes every trace of `id` from the CA system (decoder retired).
    pub fn retire_receiver(&mut self, ca: usize, id: Identity) -> Result<()> {
        let sys = self.system_mut(ca)?;
        sys.channel.per_receiver.remove(&id);
        sys.enrolled.remove(&id);
        sys.authorized.remove(&id);
        Ok(())
    }

    /// Phase I towards `id`: the enroll EMM carries the signed blob and a
    /// copy of `LK` for the CA client, protected under the receiver's
    /// channel key. The EMM is returned and also queued for broadcast.
    pub fn enroll_receiver(
        &mut self,
        ca: usize,
        id: Identity,
        dir: &Directory,
        ttp_pk: &PublicKey,
    ) -> Result<Vec<Emm>> {
        self.load_sender_directory(ca, dir, ttp_pk)?;
        let emms = self.phase1(ca, id)?;
        self.pending.extend(emms.iter().cloned());
        Ok(emms)
    }

    fn phase1(&mut self, ca: usize, id: Identity) -> Result<Vec<Emm>> {
        let suite = self.suite;
        let rng = &mut self.key_rng;
        let sys = self.systems.get_mut(ca).ok_or(SimError::UnknownCaSystem(ca))?;
        let key = sys
            .channel
            .per_receiver
            .get(&id)
            .cloned()
            .ok_or(SimError::NotProvisioned(id.0))?;
        let signed_blob = match &mut sys.sender {
            SenderState::P1(s) => Some(s.phase1(id, rng)?.signed_blob),
            SenderState::P2(s) => Some(s.phase1(id, rng)?.signed_blob),
            SenderState::Legacy => None,
        };
        sys.enrolled.insert(id);
        let Some(signed_blob) = signed_blob else {
            return Ok(Vec::new());
        };
        let ltk = sys.ltk(id).cloned().expect("phase I stored a key");
        let emm = EmmPayload::Enroll { signed_blob, ltk }.seal(&suite, &key, sys.id, Addressee::Receiver(id))?;
        Ok(vec![emm])
    }

    pub fn authorize(&mut self, ca: usize, id: Identity, flag: bool) -> Result<()> {
        let suite = self.suite;
        let sys = self.system_mut(ca)?;
        if !sys.enrolled.contains(&id) {
            return Err(SimError::NotEnrolled(id.0));
        }
        if flag {
            sys.authorized.insert(id);
        } else {
            sys.authorized.remove(&id);
        }
        let key = sys
            .channel
            .per_receiver
            .get(&id)
            .ok_or(SimError::NotProvisioned(id.0))?;
        let emm = EmmPayload::Entitlement { authorized: flag }.seal(&suite, key, sys.id, Addressee::Receiver(id))?;
        self.pending.push(emm);
        Ok(())
    }

    /// Queues the current entitlement of every enrolled receiver, e.g. for
    /// freshly installed CA clients.
    pub fn resend_entitlements(&mut self, ca: usize) -> Result<()> {
        let sys = self.system(ca)?;
        let states: Vec<(Identity, bool)> = sys
            .enrolled
            .iter()
            .map(|id| (*id, sys.authorized.contains(id)))
            .collect();
        for (id, flag) in states {
            self.authorize(ca, id, flag)?;
        }
        Ok(())
    }

    /// New sender signing pair, then Phase I again for every enrolled
    /// receiver. Only the certificate-based system calls into the TTP.
    pub fn rotate_sender_key(&mut self, ca: usize, ttp: &mut Ttp) -> Result<Vec<Emm>> {
        let rng = &mut self.key_rng;
        let sys = self.systems.get_mut(ca).ok_or(SimError::UnknownCaSystem(ca))?;
        match &mut sys.sender {
            SenderState::P1(s) => s.rekey(rng, ttp)?,
            SenderState::P2(s) => s.rekey(rng),
            SenderState::Legacy => return Err(SimError::Config("legacy CA systems have no sender key".into())),
        }
        let before = self.pending.len();
        self.announce(ca)?;
        if self.systems[ca].protocol == CaProtocol::P2 {
            self.refresh_pk_set()?;
        }
        let enrolled: Vec<Identity> = self.systems[ca].enrolled.iter().copied().collect();
        for id in enrolled {
            let emms = self.phase1(ca, id)?;
            self.pending.extend(emms);
        }
        Ok(self.pending[before..].to_vec())
    }

    /// Fresh group and per-receiver keys, as shipped with a CA client update.
    pub fn rotate_channel_keys(&mut self, ca: usize) -> Result<()> {
        let rng = &mut self.key_rng;
        let suite = self.suite;
        let sys = self.systems.get_mut(ca).ok_or(SimError::UnknownCaSystem(ca))?;
        sys.channel.group = SymKey::random(&suite, rng);
        for key in sys.channel.per_receiver.values_mut() {
            *key = SymKey::random(&suite, rng);
        }
        Ok(())
    }

    /// Broadcasts a revocation list (certificate-based systems only).
    pub fn publish_crl(&mut self, ca: usize, crl: &SignedCrl) -> Result<()> {
        let sys = self.system(ca)?;
        if sys.protocol != CaProtocol::P1 {
            return Err(SimError::Config("only certificate-based systems carry CRLs".into()));
        }
        let emm = EmmPayload::Crl(crl.clone()).seal(&self.suite, &sys.channel.group, sys.id, Addressee::Broadcast)?;
        self.pending.push(emm);
        Ok(())
    }

    /// Re-queues the broadcast key or certificate EMMs of `ca`.
    pub fn reannounce(&mut self, ca: usize) -> Result<()> {
        self.announce(ca)?;
        if self.pk_set.len() > 1 && self.system(ca)?.protocol == CaProtocol::P2 {
            let sys = &self.systems[ca];
            let emm = EmmPayload::PkSet(self.pk_set.clone()).seal(
                &self.suite,
                &sys.channel.group,
                sys.id,
                Addressee::Broadcast,
            )?;
            self.pending.push(emm);
        }
        Ok(())
    }

    /// One control-word period.
    pub fn epoch_tick(&mut self, content: &[u8]) -> Result<BroadcastFrame> {
        if self.systems.is_empty() {
            return Err(SimError::Config("no CA system configured".into()));
        }
        let n = self.suite.secret_len_bytes();
        let (r, k) = if self.pk_set.is_empty() {
            (None, SharedSecret::from_bytes(&self.shared_rng.bytes(n)))
        } else {
            let (r, k) = phase2_shared(&self.suite, &self.pk_set, &mut self.shared_rng)?;
            (Some(r), k)
        };
        let mut ecms = Vec::with_capacity(self.systems.len());
        for sys in &self.systems {
            let secret = match (sys.protocol, &r) {
                (CaProtocol::P2, Some(r)) => r.as_slice(),
                _ => k.as_bytes(),
            };
            ecms.push(Ecm::seal(&self.suite, &sys.channel.group, sys.id, self.epoch, secret)?.encode());
        }
        let frame = BroadcastFrame {
            epoch: self.epoch,
            scrambled_content: ContentScrambler::apply(k.as_bytes(), self.epoch, content),
            ecms,
            emms: self.pending.drain(..).map(|e| e.encode()).collect(),
        };
        self.control_word = Some(k);
        self.epoch += 1;
        Ok(frame)
    }

    /// A frame carrying only the queued EMMs, sent between control-word
    /// periods. Its epoch is the one most recently broadcast.
    pub fn flush_emms(&mut self) -> BroadcastFrame {
        BroadcastFrame {
            epoch: self.epoch.saturating_sub(1),
            scrambled_content: Vec::new(),
            ecms: Vec::new(),
            emms: self.pending.drain(..).map(|e| e.encode()).collect(),
        }
    }
}

fn client_keys(sys: &CaSystem, id: Identity) -> Option<ClientChannelKeys> {
    Some(ClientChannelKeys {
        ca_system_id: sys.id,
        receiver_id: id,
        group: sys.channel.group.clone(),
        receiver: sys.channel.per_receiver.get(&id)?.clone(),
    })
}
