//! Decoder: an updatable CA client and a content-decryption chip joined by
//! a plaintext channel that an adversary can read and write.
//!
//! The CA client never holds `SK_B`. The chip never hands out `SK_B`, `LK`
//! or `K`; a successful derive yields an opaque, epoch-scoped handle that
//! only [`Chip::descramble`] accepts.

use std::collections::BTreeMap;
use std::fmt;

use hbkex_core::binding::SharedSecret;
use hbkex_core::codec::{Reader, Writer};
use hbkex_core::crypto::{Ciphertext, Drbg, KeyPurpose, PublicKey, SignedMessage, Suite, SymKey};
use hbkex_core::protocol_one::{P1Receiver, Phase1Bundle};
use hbkex_core::protocol_two::{P2Phase1Bundle, P2Receiver};
use hbkex_core::ttp::{Certificate, SignedCrl};
use hbkex_core::wire::{Addressee, ClientChannelKeys, Ecm, Emm, EmmPayload};
use hbkex_core::Identity;

use crate::error::{Result, SimError};
use crate::headend::{BroadcastFrame, CaProtocol};
use crate::scrambler::ContentScrambler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ChipMsgKind {
    LoadLtk = 1,
    Derive = 2,
    PkSetUpdate = 3,
    CrlUpdate = 4,
    /// A raw control word; only legacy chips take it.
    ControlWord = 5,
}

impl ChipMsgKind {
    pub fn name(self) -> &'static str {
        match self {
            ChipMsgKind::LoadLtk => "load_ltk",
            ChipMsgKind::Derive => "derive",
            ChipMsgKind::PkSetUpdate => "pk_set_update",
            ChipMsgKind::CrlUpdate => "crl_update",
            ChipMsgKind::ControlWord => "control_word",
        }
    }
}

/// A message on the client-to-chip channel. `bytes` is the exact wire
/// content and may be freely rewritten by a tap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipMsg {
    pub kind: ChipMsgKind,
    pub bytes: Vec<u8>,
}

impl ChipMsg {
    pub fn load_ltk_p1(bundle: &Phase1Bundle) -> Self {
        Self {
            kind: ChipMsgKind::LoadLtk,
            bytes: bundle.to_bytes(),
        }
    }

    pub fn load_ltk_p2(bundle: &P2Phase1Bundle) -> Self {
        Self {
            kind: ChipMsgKind::LoadLtk,
            bytes: bundle.to_bytes(),
        }
    }

    /// `lp(sender_pk) || lp(ct)`; the key is empty for the certificate-based chip.
    pub fn derive(sender_pk: Option<&PublicKey>, ct: &Ciphertext) -> Self {
        let pk = sender_pk.map(PublicKey::as_bytes).unwrap_or(&[]);
        Self {
            kind: ChipMsgKind::Derive,
            bytes: Writer::new().bytes(pk).bytes(ct.as_bytes()).finish(),
        }
    }

    pub fn pk_set(keys: &[PublicKey]) -> Self {
        let mut w = Writer::new();
        w.u32(keys.len() as u32);
        for k in keys {
            k.encode(&mut w);
        }
        Self {
            kind: ChipMsgKind::PkSetUpdate,
            bytes: w.finish(),
        }
    }

    pub fn crl(crl: &SignedCrl) -> Self {
        Self {
            kind: ChipMsgKind::CrlUpdate,
            bytes: crl.to_bytes(),
        }
    }

    pub fn control_word(k: &[u8]) -> Self {
        Self {
            kind: ChipMsgKind::ControlWord,
            bytes: k.to_vec(),
        }
    }

    /// Bytes this message occupies on the chip channel: kind and length
    /// prefix included.
    pub fn wire_len(&self) -> usize {
        1 + 4 + self.bytes.len()
    }

    fn parse_derive(&self) -> hbkex_core::Result<(PublicKey, Ciphertext)> {
        let mut r = Reader::new(&self.bytes);
        let pk = PublicKey::decode(&mut r)?;
        let ct = Ciphertext(r.bytes()?.to_vec());
        r.finish()?;
        Ok((pk, ct))
    }

    fn parse_pk_set(&self) -> hbkex_core::Result<Vec<PublicKey>> {
        let mut r = Reader::new(&self.bytes);
        let n = r.u32()? as usize;
        if n > r.remaining() / 4 {
            return Err(r.malformed("key count exceeds input"));
        }
        let keys = (0..n)
            .map(|_| PublicKey::decode(&mut r))
            .collect::<hbkex_core::Result<Vec<_>>>()?;
        r.finish()?;
        Ok(keys)
    }
}

/// Opaque proof that the chip derived a control word for `epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlWordHandle {
    chip: u64,
    epoch: u64,
    seq: u64,
}

impl ControlWordHandle {
    pub fn epoch(&self) -> u64 {
        self.epoch
    }
}

#[derive(Clone)]
enum ChipState {
    P1(Box<P1Receiver>),
    P2(Box<P2Receiver>),
    Legacy,
}

#[derive(Clone)]
pub struct Chip {
    serial: u64,
    state: ChipState,
    current: Option<(ControlWordHandle, SharedSecret)>,
    next_seq: u64,
}

impl fmt::Debug for Chip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chip")
            .field("serial", &self.serial)
            .field("kind", &self.kind())
            .field("id", &self.id())
            .finish_non_exhaustive()
    }
}

impl Chip {
    /// Builds a chip with a fresh `(SK_B, PK_B)` generated inside it and
    /// returns the public half for registration. `pk_t` is required by,
    /// and fixed forever in, the certificate-based chip.
    pub fn manufacture(
        suite: Suite,
        kind: CaProtocol,
        id: Identity,
        pk_t: Option<&PublicKey>,
        serial: u64,
        rng: &mut Drbg,
    ) -> Result<(Self, Option<PublicKey>)> {
        let (state, public) = match kind {
            CaProtocol::P1 => {
                let pk_t = pk_t.ok_or_else(|| SimError::Config("certificate-based chip needs PK_T".into()))?;
                let kp = suite.keygen(KeyPurpose::Pke, rng);
                (
                    ChipState::P1(Box::new(P1Receiver::new(suite, id, pk_t.clone(), kp.private))),
                    Some(kp.public),
                )
            }
            CaProtocol::P2 => {
                let kp = suite.keygen(KeyPurpose::Pke, rng);
                (
                    ChipState::P2(Box::new(P2Receiver::new(suite, id, kp.private))),
                    Some(kp.public),
                )
            }
            CaProtocol::Legacy => (ChipState::Legacy, None),
        };
        Ok((
            Self {
                serial,
                state,
                current: None,
                next_seq: 0,
            },
            public,
        ))
    }

    pub fn kind(&self) -> CaProtocol {
        match self.state {
            ChipState::P1(_) => CaProtocol::P1,
            ChipState::P2(_) => CaProtocol::P2,
            ChipState::Legacy => CaProtocol::Legacy,
        }
    }

    pub fn serial(&self) -> u64 {
        self.serial
    }

    pub fn id(&self) -> Option<Identity> {
        match &self.state {
            ChipState::P1(r) => Some(r.id()),
            ChipState::P2(r) => Some(r.id()),
            ChipState::Legacy => None,
        }
    }

    /// The installed `PK_T` of a certificate-based chip. Public data.
    pub fn trusted_key(&self) -> Option<&PublicKey> {
        match &self.state {
            ChipState::P1(r) => Some(r.trusted_key()),
            _ => None,
        }
    }

    /// Runs the receiver-side protocol checks. A derive produces a handle
    /// for `epoch`, the period the chip is currently descrambling. State is
    /// unchanged on error.
    pub fn process(&mut self, msg: &ChipMsg, epoch: u64) -> Result<Option<ControlWordHandle>> {
        let unsupported = || SimError::UnsupportedChipMessage(msg.kind.name());
        let k = match (&mut self.state, msg.kind) {
            (ChipState::P1(r), ChipMsgKind::LoadLtk) => {
                r.phase1(&Phase1Bundle::from_bytes(&msg.bytes)?)?;
                return Ok(None);
            }
            (ChipState::P2(r), ChipMsgKind::LoadLtk) => {
                r.phase1(&P2Phase1Bundle::from_bytes(&msg.bytes)?)?;
                return Ok(None);
            }
            (ChipState::P1(r), ChipMsgKind::CrlUpdate) => {
                r.apply_crl(&SignedCrl::from_bytes(&msg.bytes)?)?;
                return Ok(None);
            }
            (ChipState::P2(r), ChipMsgKind::PkSetUpdate) => {
                r.set_active_pk_set(msg.parse_pk_set()?)?;
                return Ok(None);
            }
            (ChipState::P1(r), ChipMsgKind::Derive) => {
                let (pk, ct) = msg.parse_derive()?;
                if !pk.is_empty() {
                    return Err(hbkex_core::Error::Malformed {
                        offset: 0,
                        reason: "unexpected sender key",
                    }
                    .into());
                }
                r.phase2(&ct)?
            }
            (ChipState::P2(r), ChipMsgKind::Derive) => {
                let (pk, ct) = msg.parse_derive()?;
                r.phase2(&pk, &ct)?
            }
            (ChipState::Legacy, ChipMsgKind::ControlWord) => SharedSecret::from_bytes(&msg.bytes),
            _ => return Err(unsupported()),
        };
        let handle = ControlWordHandle {
            chip: self.serial,
            epoch,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.current = Some((handle, k));
        Ok(Some(handle))
    }

    /// Descrambles with the control word behind `handle`; only the most
    /// recent handle of this chip, and only for its own epoch, is valid.
    pub fn descramble(&self, handle: &ControlWordHandle, epoch: u64, scrambled: &[u8]) -> Result<Vec<u8>> {
        match &self.current {
            Some((current, k)) if current == handle && handle.epoch == epoch => {
                Ok(ContentScrambler::apply(k.as_bytes(), epoch, scrambled))
            }
            _ => Err(SimError::StaleHandle),
        }
    }
}

/// Everything a compromised CA client gives away.
#[derive(Debug, Clone)]
pub struct ClientSecrets {
    pub keys: ClientChannelKeys,
    pub ltk_copies: BTreeMap<PublicKey, SymKey>,
}

#[derive(Clone)]
pub struct CaClient {
    suite: Suite,
    protocol: CaProtocol,
    keys: ClientChannelKeys,
    sender_pk: Option<PublicKey>,
    sender_cert: Option<Certificate>,
    explicit_set: Option<Vec<PublicKey>>,
    ltk_copy: BTreeMap<PublicKey, SymKey>,
    pending_enroll: Vec<(SignedMessage, SymKey)>,
    entitled: bool,
}

impl fmt::Debug for CaClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CaClient")
            .field("ca_system_id", &self.keys.ca_system_id)
            .field("receiver", &self.keys.receiver_id)
            .field("protocol", &self.protocol)
            .field("entitled", &self.entitled)
            .finish_non_exhaustive()
    }
}

impl CaClient {
    pub fn new(suite: Suite, protocol: CaProtocol, keys: ClientChannelKeys) -> Self {
        Self {
            suite,
            protocol,
            keys,
            sender_pk: None,
            sender_cert: None,
            explicit_set: None,
            ltk_copy: BTreeMap::new(),
            pending_enroll: Vec::new(),
            entitled: false,
        }
    }

    pub fn ca_system_id(&self) -> u16 {
        self.keys.ca_system_id
    }

    pub fn receiver_id(&self) -> Identity {
        self.keys.receiver_id
    }

    pub fn protocol(&self) -> CaProtocol {
        self.protocol
    }

    pub fn is_entitled(&self) -> bool {
        self.entitled
    }

    pub fn sender_pk(&self) -> Option<&PublicKey> {
        self.sender_pk.as_ref()
    }

    /// Exposed for compromise modelling.
    pub fn secrets(&self) -> ClientSecrets {
        ClientSecrets {
            keys: self.keys.clone(),
            ltk_copies: self.ltk_copy.clone(),
        }
    }

    fn effective_set(&self) -> Option<Vec<PublicKey>> {
        match (&self.explicit_set, &self.sender_pk) {
            (Some(set), _) => Some(set.clone()),
            (None, Some(pk)) => Some(vec![pk.clone()]),
            (None, None) => None,
        }
    }

    fn load_msg(&self, signed_blob: SignedMessage) -> Option<ChipMsg> {
        match self.protocol {
            CaProtocol::P1 => Some(ChipMsg::load_ltk_p1(&Phase1Bundle {
                sender_cert: self.sender_cert.clone()?,
                signed_blob,
            })),
            CaProtocol::P2 => Some(ChipMsg::load_ltk_p2(&P2Phase1Bundle {
                pk_a: self.sender_pk.clone()?,
                signed_blob,
            })),
            CaProtocol::Legacy => None,
        }
    }

    fn flush_pending(&mut self, out: &mut Vec<ChipMsg>) {
        let Some(pk) = self.sender_pk.clone() else { return };
        for (blob, ltk) in std::mem::take(&mut self.pending_enroll) {
            if let Some(msg) = self.load_msg(blob) {
                self.ltk_copy.insert(pk.clone(), ltk);
                out.push(msg);
            }
        }
    }

    /// Handles one encoded EMM. EMMs for other CA systems or other
    /// receivers produce nothing; protection failures are errors.
    pub fn process_emm(&mut self, bytes: &[u8]) -> Result<Vec<ChipMsg>> {
        let emm = Emm::decode(bytes)?;
        if emm.ca_system_id != self.keys.ca_system_id {
            return Ok(Vec::new());
        }
        let key = match emm.addressee {
            Addressee::Broadcast => &self.keys.group,
            Addressee::Receiver(id) if id == self.keys.receiver_id => &self.keys.receiver,
            Addressee::Receiver(_) => return Ok(Vec::new()),
        };
        let payload = EmmPayload::decode(emm.kind, &emm.open(&self.suite, key)?)?;
        let mut out = Vec::new();
        match payload {
            EmmPayload::SenderPk(pk) => {
                self.sender_pk = Some(pk);
                if let Some(set) = self.effective_set() {
                    out.push(ChipMsg::pk_set(&set));
                }
                self.flush_pending(&mut out);
            }
            EmmPayload::Cert(cert) => {
                self.sender_pk = Some(cert.subject_pk.clone());
                self.sender_cert = Some(cert);
                self.flush_pending(&mut out);
            }
            EmmPayload::PkSet(keys) => {
                self.explicit_set = Some(keys);
                if let Some(set) = self.effective_set() {
                    out.push(ChipMsg::pk_set(&set));
                }
            }
            EmmPayload::Enroll { signed_blob, ltk } => {
                self.pending_enroll.push((signed_blob, ltk));
                self.flush_pending(&mut out);
            }
            EmmPayload::Crl(crl) => out.push(ChipMsg::crl(&crl)),
            EmmPayload::Entitlement { authorized } => self.entitled = authorized,
        }
        Ok(out)
    }

    /// Handles one encoded ECM: recovers `r` or `K` and, when entitled and
    /// enrolled, wraps it under the local `LK` copy for the chip.
    pub fn process_ecm(&mut self, bytes: &[u8]) -> Result<Option<ChipMsg>> {
        let ecm = Ecm::decode(bytes)?;
        if ecm.ca_system_id != self.keys.ca_system_id {
            return Ok(None);
        }
        let secret = ecm.open(&self.suite, &self.keys.group)?;
        if !self.entitled {
            return Ok(None);
        }
        if self.protocol == CaProtocol::Legacy {
            return Ok(Some(ChipMsg::control_word(&secret)));
        }
        let Some(pk) = self.sender_pk.as_ref() else {
            return Ok(None);
        };
        let Some(lk) = self.ltk_copy.get(pk) else {
            return Ok(None);
        };
        let ct = self.suite.sym_encrypt(lk, &secret)?;
        let pk = (self.protocol == CaProtocol::P2).then_some(pk);
        Ok(Some(ChipMsg::derive(pk, &ct)))
    }
}

/// Result of running the client over one frame.
#[derive(Debug, Default)]
pub struct ClientOutput {
    pub msgs: Vec<ChipMsg>,
    pub errors: Vec<SimError>,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    slot: usize,
    ca: usize,
    client: CaClient,
    chip: Chip,
}

impl Decoder {
    pub fn new(slot: usize, ca: usize, client: CaClient, chip: Chip) -> Self {
        Self { slot, ca, client, chip }
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn ca(&self) -> usize {
        self.ca
    }

    pub fn client(&self) -> &CaClient {
        &self.client
    }

    pub fn client_mut(&mut self) -> &mut CaClient {
        &mut self.client
    }

    pub fn chip(&self) -> &Chip {
        &self.chip
    }

    /// Installs an updated CA client; the chip is kept.
    pub fn swap_client(&mut self, client: CaClient) -> CaClient {
        std::mem::replace(&mut self.client, client)
    }

    /// EMMs first, then ECMs.
    pub fn client_stage(&mut self, frame: &BroadcastFrame) -> ClientOutput {
        let mut out = ClientOutput::default();
        for emm in &frame.emms {
            match self.client.process_emm(emm) {
                Ok(msgs) => out.msgs.extend(msgs),
                Err(e) => out.errors.push(e),
            }
        }
        for ecm in &frame.ecms {
            match self.client.process_ecm(ecm) {
                Ok(Some(msg)) => out.msgs.push(msg),
                Ok(None) => {}
                Err(e) => out.errors.push(e),
            }
        }
        out
    }

    pub fn chip_process(&mut self, msg: &ChipMsg, epoch: u64) -> Result<Option<ControlWordHandle>> {
        self.chip.process(msg, epoch)
    }

    pub fn descramble(&self, handle: &ControlWordHandle, epoch: u64, scrambled: &[u8]) -> Result<Vec<u8>> {
        self.chip.descramble(handle, epoch, scrambled)
    }

    /// Client then chip with no one on the channel. Returns the handles
    /// produced and every error seen.
    pub fn receive(&mut self, frame: &BroadcastFrame) -> (Vec<ControlWordHandle>, Vec<SimError>) {
        let ClientOutput { msgs, mut errors } = self.client_stage(frame);
        let mut handles = Vec::new();
        for msg in &msgs {
            match self.chip.process(msg, frame.epoch) {
                Ok(Some(h)) => handles.push(h),
                Ok(None) => {}
                Err(e) => errors.push(e),
            }
        }
        (handles, errors)
    }
}
