//! The scenario world: one TTP, one head-end, the decoders and the
//! adversary, stepped one epoch at a time.
//!
//! Per epoch: authorization changes and one-off events (their EMMs go out
//! in an EMM-only frame right away), then the control-word tick, frame
//! tampering, every CA client, the adversary on the chip channels, and
//! finally every chip. Outcomes are measured by descrambling.

use std::collections::BTreeSet;

use hbkex_core::codec::Writer;
use hbkex_core::crypto::{Drbg, Suite};
use hbkex_core::ttp::{Role, Ttp};
use hbkex_core::Identity;

use crate::adversary::{credential_len, flip_bit, Adversary, ForgeTarget, StolenSender};
use crate::decoder::{CaClient, Chip, ChipMsg, ChipMsgKind, ControlWordHandle, Decoder};
use crate::error::Result;
use crate::headend::{BroadcastFrame, CaProtocol, Headend};
use crate::ledger::BandwidthLedger;
use crate::report::{AdvMark, EpochRecord, RunReport, Verdicts};
use crate::scenario::{Action, Compromise, InjectClass, Outcome, ReplayClass, ScenarioConfig, TamperClass};

/// Identity of the first chip in slot 0; slot `s` starts at `base + s`.
pub const DECODER_ID_BASE: u64 = 1000;
/// Added to a slot's identity each time its decoder is replaced.
pub const REPLACEMENT_ID_STEP: u64 = 100_000;
/// Magic of a frame capture file: `"HBCP" | ver | count u32 | lp(frame)*`.
pub const CAPTURE_MAGIC: &[u8; 4] = b"HBCP";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Genuine,
    Adversary,
}

/// What happened at one decoder during one delivery.
#[derive(Debug, Default)]
struct SlotEpoch {
    interfered: bool,
    adv_sent: usize,
    adv_accepted: usize,
    genuine_rejected: bool,
    genuine_load_rejected: bool,
    handle: Option<(ControlWordHandle, Origin)>,
}

type Tagged = (Vec<u8>, Origin);

pub struct World<'c> {
    cfg: &'c ScenarioConfig,
    seed: u64,
    suite: Suite,
    ttp: Ttp,
    ttp_rng: Drbg,
    decoder_rng: Drbg,
    content_rng: Drbg,
    headend: Headend,
    decoders: Vec<Decoder>,
    ids: Vec<Identity>,
    replacements: Vec<u64>,
    next_chip_serial: u64,
    authorized: Vec<bool>,
    taint: Vec<BTreeSet<ChipMsgKind>>,
    adversary: Adversary,
    ledger: BandwidthLedger,
    records: Vec<EpochRecord>,
    events: Vec<(u64, String)>,
    decoders_replaced: usize,
    recover_epoch: Option<u64>,
    capture: Option<Vec<Vec<u8>>>,
}

impl<'c> World<'c> {
    /// Builds the world and runs setup: TTP, CA systems, chip
    /// registration, enrollment and the initial entitlements.
    pub fn new(cfg: &'c ScenarioConfig, seed: u64) -> Result<Self> {
        Self::build(cfg, seed, false)
    }

    /// Like [`World::new`] but keeps every broadcast frame, setup included.
    pub fn with_capture(cfg: &'c ScenarioConfig, seed: u64) -> Result<Self> {
        Self::build(cfg, seed, true)
    }

    fn build(cfg: &'c ScenarioConfig, seed: u64, capture: bool) -> Result<Self> {
        cfg.validate()?;
        let suite = Suite::default();
        let mut root = Drbg::from_u64(seed);
        let mut ttp_rng = root.fork(b"ttp");
        let mut headend_rng = root.fork(b"headend");
        let decoder_rng = root.fork(b"decoders");
        let adversary_rng = root.fork(b"adversary");
        let content_rng = root.fork(b"content");
        let ttp = Ttp::init(suite, &mut ttp_rng);
        let headend = Headend::new(suite, &mut headend_rng);
        let slots = cfg.decoders.len();
        let mut world = Self {
            cfg,
            seed,
            suite,
            ttp,
            ttp_rng,
            decoder_rng,
            content_rng,
            headend,
            decoders: Vec::with_capacity(slots),
            ids: (0..slots).map(|s| Identity(DECODER_ID_BASE + s as u64)).collect(),
            replacements: vec![0; slots],
            next_chip_serial: 0,
            authorized: vec![false; slots],
            taint: vec![BTreeSet::new(); slots],
            adversary: Adversary::new(suite, adversary_rng),
            ledger: BandwidthLedger::default(),
            records: Vec::new(),
            events: Vec::new(),
            decoders_replaced: 0,
            recover_epoch: None,
            capture: capture.then(Vec::new),
        };
        world.setup()?;
        Ok(world)
    }

    fn setup(&mut self) -> Result<()> {
        for protocol in &self.cfg.ca_systems {
            self.headend.add_ca_system(*protocol, &mut self.ttp)?;
        }
        let mut chips = Vec::with_capacity(self.ids.len());
        for slot in 0..self.ids.len() {
            chips.push(self.manufacture(slot, self.ids[slot])?);
        }
        let dir = self.ttp.export()?;
        let pk_t = self.ttp.public_key().clone();
        self.headend.load_directory(&dir, &pk_t)?;
        for (slot, chip) in chips.into_iter().enumerate() {
            let ca = self.cfg.decoders[slot];
            let keys = self.headend.provision_receiver(ca, self.ids[slot])?;
            let client = CaClient::new(self.suite, self.cfg.ca_systems[ca], keys);
            self.decoders.push(Decoder::new(slot, ca, client, chip));
            self.headend.enroll_receiver(ca, self.ids[slot], &dir, &pk_t)?;
        }
        let initial = self.cfg.authorized_at(0);
        for slot in 0..self.ids.len() {
            self.authorized[slot] = initial.contains(slot);
            self.headend
                .authorize(self.cfg.decoders[slot], self.ids[slot], self.authorized[slot])?;
        }
        self.flush_and_deliver()?;
        Ok(())
    }

    /// A new chip for `slot`, registered with the TTP when it has a key.
    fn manufacture(&mut self, slot: usize, id: Identity) -> Result<Chip> {
        let kind = self.cfg.ca_systems[self.cfg.decoders[slot]];
        let pk_t = self.ttp.public_key().clone();
        let serial = self.next_chip_serial;
        self.next_chip_serial += 1;
        let (chip, public) = Chip::manufacture(self.suite, kind, id, Some(&pk_t), serial, &mut self.decoder_rng)?;
        if let Some(pk) = public {
            self.ttp.register_receiver(id, pk)?;
        }
        Ok(chip)
    }

    pub fn headend(&self) -> &Headend {
        &self.headend
    }

    pub fn ttp(&self) -> &Ttp {
        &self.ttp
    }

    pub fn decoders(&self) -> &[Decoder] {
        &self.decoders
    }

    pub fn ledger(&self) -> &BandwidthLedger {
        &self.ledger
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    /// Delivers queued EMMs in an EMM-only frame with no adversary on the
    /// path. Returns the slots whose chip rejected a genuine `load_ltk`.
    fn flush_and_deliver(&mut self) -> Result<Vec<usize>> {
        if self.headend.pending_emms() == 0 {
            return Ok(Vec::new());
        }
        let frame = self.headend.flush_emms();
        self.broadcast(&frame);
        let mut rejected = Vec::new();
        for slot in 0..self.decoders.len() {
            let mut st = SlotEpoch::default();
            let emms: Vec<Tagged> = frame.emms.iter().map(|e| (e.clone(), Origin::Genuine)).collect();
            let msgs = self.client_stage(slot, &[], &emms, &mut st);
            self.chip_stage(slot, msgs, frame.epoch, &mut st);
            if st.genuine_load_rejected {
                rejected.push(slot);
            }
        }
        Ok(rejected)
    }

    fn broadcast(&mut self, frame: &BroadcastFrame) {
        self.ledger.record_frame(frame);
        self.adversary.observe_frame(frame);
        if let Some(c) = &mut self.capture {
            c.push(frame.encode());
        }
    }

    fn client_stage(
        &mut self,
        slot: usize,
        ecms: &[Tagged],
        emms: &[Tagged],
        st: &mut SlotEpoch,
    ) -> Vec<(ChipMsg, Origin)> {
        let client = self.decoders[slot].client_mut();
        let mut out = Vec::new();
        let note = |origin: Origin, accepted: bool, st: &mut SlotEpoch| match origin {
            Origin::Adversary => {
                st.adv_sent += 1;
                st.adv_accepted += usize::from(accepted);
            }
            Origin::Genuine => st.genuine_rejected |= !accepted,
        };
        for (bytes, origin) in emms {
            match client.process_emm(bytes) {
                Ok(msgs) => {
                    // An adversary EMM that yields nothing was ignored.
                    note(*origin, *origin == Origin::Genuine || !msgs.is_empty(), st);
                    out.extend(msgs.into_iter().map(|m| (m, *origin)));
                }
                Err(_) => note(*origin, false, st),
            }
        }
        for (bytes, origin) in ecms {
            match client.process_ecm(bytes) {
                Ok(msg) => {
                    note(*origin, *origin == Origin::Genuine || msg.is_some(), st);
                    out.extend(msg.map(|m| (m, *origin)));
                }
                Err(_) => note(*origin, false, st),
            }
        }
        out
    }

    fn chip_stage(&mut self, slot: usize, msgs: Vec<(ChipMsg, Origin)>, epoch: u64, st: &mut SlotEpoch) {
        for (msg, origin) in msgs {
            let state_changing = matches!(
                msg.kind,
                ChipMsgKind::LoadLtk | ChipMsgKind::PkSetUpdate | ChipMsgKind::CrlUpdate
            );
            if origin == Origin::Genuine {
                self.ledger.record_chip_msg(&msg);
                self.adversary.observe_chip_msg(slot, &msg);
            } else {
                st.adv_sent += 1;
            }
            match self.decoders[slot].chip_process(&msg, epoch) {
                Ok(handle) => {
                    match origin {
                        Origin::Adversary => {
                            st.adv_accepted += 1;
                            if state_changing {
                                self.taint[slot].insert(msg.kind);
                            }
                        }
                        Origin::Genuine => {
                            self.taint[slot].remove(&msg.kind);
                        }
                    }
                    if let Some(h) = handle {
                        st.handle = Some((h, origin));
                    }
                }
                Err(_) => {
                    if origin == Origin::Genuine {
                        st.genuine_rejected = true;
                        st.genuine_load_rejected |= msg.kind == ChipMsgKind::LoadLtk;
                    }
                }
            }
        }
    }

    fn actions_at(&self, epoch: u64) -> impl Iterator<Item = &'c Action> {
        self.cfg
            .actions
            .iter()
            .filter(move |a| a.first <= epoch && epoch <= a.last)
            .map(|a| &a.action)
    }

    /// Runs every remaining epoch and builds the report.
    pub fn run(mut self) -> Result<RunReport> {
        for epoch in 0..self.cfg.epochs {
            self.step(epoch)?;
        }
        Ok(self.report())
    }

    pub fn step(&mut self, epoch: u64) -> Result<()> {
        self.apply_authorization(epoch)?;
        self.apply_events(epoch)?;
        let content = self.content_rng.bytes(self.cfg.content_len);
        let frame = self.headend.epoch_tick(&content)?;
        self.broadcast(&frame);
        self.learn_control_words(epoch);

        let slots = self.decoders.len();
        let mut states: Vec<SlotEpoch> = (0..slots).map(|_| SlotEpoch::default()).collect();
        let mut chip_inputs = Vec::with_capacity(slots);
        for (slot, st) in states.iter_mut().enumerate() {
            let (ecms, emms) = self.delivered_frame(slot, &frame, epoch, st);
            chip_inputs.push(self.client_stage(slot, &ecms, &emms, st));
        }
        self.intercept(epoch, &mut chip_inputs, &mut states)?;
        for (slot, msgs) in chip_inputs.into_iter().enumerate() {
            self.chip_stage(slot, msgs, epoch, &mut states[slot]);
        }

        let mut record = EpochRecord {
            epoch,
            authorized: self.authorized.clone(),
            outcomes: Vec::with_capacity(slots),
            marks: Vec::with_capacity(slots),
            affected: Vec::with_capacity(slots),
        };
        for (slot, st) in states.iter().enumerate() {
            let mut adversary_success = false;
            let outcome = match &st.handle {
                Some((h, origin)) => {
                    let clear = self.decoders[slot].descramble(h, epoch, &frame.scrambled_content);
                    if clear.as_deref().ok() == Some(content.as_slice()) {
                        adversary_success = *origin == Origin::Adversary;
                        Outcome::Derived
                    } else {
                        Outcome::Mismatch
                    }
                }
                None if st.genuine_rejected || st.adv_sent > 0 => Outcome::Rejected,
                None => Outcome::Excluded,
            };
            let affected = st.interfered || st.adv_sent > 0 || !self.taint[slot].is_empty();
            let mark = if adversary_success {
                AdvMark::Succeeded
            } else if st.adv_accepted > 0 {
                AdvMark::Accepted
            } else if st.adv_sent > 0 || st.interfered {
                AdvMark::Rejected
            } else if affected {
                AdvMark::Tainted
            } else {
                AdvMark::None
            };
            record.outcomes.push(outcome);
            record.marks.push(mark);
            record.affected.push(affected);
        }
        self.records.push(record);
        Ok(())
    }

    fn apply_authorization(&mut self, epoch: u64) -> Result<()> {
        if epoch == 0 || !self.cfg.authorization.iter().any(|c| c.from == epoch) {
            return Ok(());
        }
        let set = self.cfg.authorized_at(epoch);
        for slot in 0..self.decoders.len() {
            let flag = set.contains(slot);
            if flag != self.authorized[slot] {
                self.authorized[slot] = flag;
                self.headend.authorize(self.cfg.decoders[slot], self.ids[slot], flag)?;
            }
        }
        Ok(())
    }

    fn apply_events(&mut self, epoch: u64) -> Result<()> {
        let events: Vec<&Action> = self
            .cfg
            .actions
            .iter()
            .filter(|a| a.first == epoch && a.action.is_event())
            .map(|a| &a.action)
            .collect();
        let mut rotated_p1 = BTreeSet::new();
        for action in events {
            self.events.push((epoch, action.to_string()));
            match action {
                Action::Compromise(c) => self.compromise(c),
                Action::TtpRotate => self.rotate_ttp()?,
                Action::RotateSender { ca } => {
                    self.headend.rotate_sender_key(*ca, &mut self.ttp)?;
                    if self.cfg.ca_systems[*ca] == CaProtocol::P1 {
                        rotated_p1.insert(*ca);
                    }
                }
                Action::Recover => {
                    self.recover()?;
                    rotated_p1.extend(self.p1_systems());
                    self.recover_epoch.get_or_insert(epoch);
                }
                _ => unreachable!("only events are selected"),
            }
        }
        let rejected = self.flush_and_deliver()?;
        for slot in rejected {
            self.replace_decoder(slot, epoch)?;
            rotated_p1.insert(self.cfg.decoders[slot]);
        }
        if !rotated_p1.is_empty() {
            let crl = self.ttp.signed_crl()?;
            for ca in rotated_p1 {
                self.headend.publish_crl(ca, &crl)?;
            }
        }
        self.flush_and_deliver()?;
        Ok(())
    }

    fn p1_systems(&self) -> Vec<usize> {
        (0..self.cfg.ca_systems.len())
            .filter(|ca| self.cfg.ca_systems[*ca] == CaProtocol::P1)
            .collect()
    }

    fn compromise(&mut self, c: &Compromise) {
        match c {
            Compromise::TtpKey => self
                .adversary
                .steal_ttp_key(self.ttp.generation(), self.ttp.signing_keypair().clone()),
            Compromise::SenderKeys { ca } => {
                for (index, sys) in self.headend.systems().iter().enumerate() {
                    if ca.is_some_and(|c| c != index) {
                        continue;
                    }
                    if let Some(keys) = sys.sender_signing_keypair() {
                        self.adversary.steal_sender(
                            index,
                            StolenSender {
                                keys: keys.clone(),
                                certificate: sys.sender_certificate().cloned(),
                            },
                        );
                    }
                }
            }
            Compromise::CaClient { decoder } => {
                for d in &self.decoders {
                    if decoder.is_none_or(|s| s == d.slot()) {
                        self.adversary.steal_client(d.slot(), d.client().secrets());
                    }
                }
            }
            Compromise::ControlWord { .. } => unreachable!("handled per epoch"),
        }
    }

    /// New `(SK_T, PK_T)`; receiver certificates are re-issued and every
    /// sender reloads the directory.
    fn rotate_ttp(&mut self) -> Result<()> {
        self.ttp.rotate(&mut self.ttp_rng)?;
        let dir = self.ttp.export()?;
        let pk_t = self.ttp.public_key().clone();
        self.headend.load_directory(&dir, &pk_t)?;
        Ok(())
    }

    /// Everything but the chips is renewed: TTP key, CA client software
    /// with fresh channel keys, sender keys and long-term keys.
    fn recover(&mut self) -> Result<()> {
        self.rotate_ttp()?;
        for ca in 0..self.cfg.ca_systems.len() {
            self.headend.rotate_channel_keys(ca)?;
            for slot in 0..self.decoders.len() {
                if self.cfg.decoders[slot] != ca {
                    continue;
                }
                let keys = self.headend.client_keys(ca, self.ids[slot])?;
                let client = CaClient::new(self.suite, self.cfg.ca_systems[ca], keys);
                self.decoders[slot].swap_client(client);
            }
            if self.cfg.ca_systems[ca] == CaProtocol::Legacy {
                self.headend.reannounce(ca)?;
            } else {
                self.headend.rotate_sender_key(ca, &mut self.ttp)?;
            }
            self.headend.resend_entitlements(ca)?;
        }
        Ok(())
    }

    /// Swaps in a new chip (and CA client) for a decoder whose chip can no
    /// longer accept genuine enrollment. The old chip's certificate is revoked.
    fn replace_decoder(&mut self, slot: usize, epoch: u64) -> Result<()> {
        let ca = self.cfg.decoders[slot];
        let old = self.ids[slot];
        self.replacements[slot] += 1;
        let id = Identity(DECODER_ID_BASE + slot as u64 + REPLACEMENT_ID_STEP * self.replacements[slot]);
        let chip = self.manufacture(slot, id)?;
        let serials: Vec<u64> = self
            .ttp
            .issued()
            .iter()
            .filter(|c| c.subject_role == Role::Receiver && c.subject_id == old)
            .map(|c| c.serial)
            .collect();
        for serial in serials {
            self.ttp.revoke(serial)?;
        }
        self.headend.retire_receiver(ca, old)?;
        let dir = self.ttp.export()?;
        let pk_t = self.ttp.public_key().clone();
        self.headend.load_directory(&dir, &pk_t)?;
        let keys = self.headend.provision_receiver(ca, id)?;
        let client = CaClient::new(self.suite, self.cfg.ca_systems[ca], keys);
        self.decoders[slot] = Decoder::new(slot, ca, client, chip);
        self.ids[slot] = id;
        self.headend.reannounce(ca)?;
        self.headend.enroll_receiver(ca, id, &dir, &pk_t)?;
        self.headend.authorize(ca, id, self.authorized[slot])?;
        self.taint[slot].clear();
        self.decoders_replaced += 1;
        self.events.push((epoch, format!("replace decoder={slot} id={}", id.0)));
        Ok(())
    }

    fn learn_control_words(&mut self, epoch: u64) {
        let leaking = self
            .actions_at(epoch)
            .any(|a| matches!(a, Action::Compromise(Compromise::ControlWord { decoder }) if self.authorized[*decoder]));
        if leaking {
            if let Some(k) = self.headend.current_control_word() {
                let k = k.as_bytes().to_vec();
                self.adversary.learn_control_word(epoch, &k);
            }
        }
    }

    /// The frame as it reaches `slot`, after any broadcast-class tampering.
    fn delivered_frame(
        &self,
        slot: usize,
        frame: &BroadcastFrame,
        epoch: u64,
        st: &mut SlotEpoch,
    ) -> (Vec<Tagged>, Vec<Tagged>) {
        let mut ecms: Vec<Tagged> = frame.ecms.iter().map(|e| (e.clone(), Origin::Genuine)).collect();
        let mut emms: Vec<Tagged> = frame.emms.iter().map(|e| (e.clone(), Origin::Genuine)).collect();
        for scheduled in self.cfg.actions.iter().filter(|a| a.first <= epoch && epoch <= a.last) {
            let Action::Tamper {
                class,
                bit,
                stride,
                dst,
            } = &scheduled.action
            else {
                continue;
            };
            if !class.is_broadcast() || dst.is_some_and(|d| d != slot) {
                continue;
            }
            let bit = bit + stride * (epoch - scheduled.first) as usize;
            let ca_system_id = self.headend.systems()[self.cfg.decoders[slot]].id();
            match class {
                TamperClass::Ecm => {
                    for (bytes, origin) in &mut ecms {
                        flip_bit(bytes, bit);
                        *origin = Origin::Adversary;
                        st.interfered = true;
                    }
                }
                TamperClass::EmmBroadcast => {
                    if let Some(captured) = self.adversary.captured_broadcast_emm(ca_system_id) {
                        let mut b = captured.to_vec();
                        flip_bit(&mut b, bit);
                        emms.push((b, Origin::Adversary));
                        st.interfered = true;
                    }
                }
                TamperClass::EmmEnroll => {
                    if let Some(captured) = self.adversary.captured_enroll_emm(self.ids[slot]) {
                        let mut b = captured.to_vec();
                        flip_bit(&mut b, bit);
                        emms.push((b, Origin::Adversary));
                        st.interfered = true;
                    }
                }
                _ => unreachable!("broadcast classes only"),
            }
        }
        (ecms, emms)
    }

    fn forge_target(&self, slot: usize) -> Result<ForgeTarget> {
        let ca = self.cfg.decoders[slot];
        let sys = self.headend.system(ca)?;
        let id = self.ids[slot];
        Ok(ForgeTarget {
            protocol: sys.protocol(),
            ca_system_id: sys.id(),
            receiver_id: id,
            receiver_pk: self.ttp.receivers().get(&id).cloned(),
            sender_pk: sys.sender_public_key().cloned(),
            pk_set: self.headend.pk_set().to_vec(),
            ttp_generation: self.ttp.generation(),
        })
    }

    /// The adversary on the chip channels: rewrites genuine messages in
    /// place and appends its own after them.
    fn intercept(&mut self, epoch: u64, inputs: &mut [Vec<(ChipMsg, Origin)>], states: &mut [SlotEpoch]) -> Result<()> {
        let scheduled: Vec<_> = self
            .cfg
            .actions
            .iter()
            .filter(|a| a.first <= epoch && epoch <= a.last && !a.action.is_event())
            .collect();
        for a in scheduled {
            match &a.action {
                Action::Tamper {
                    class,
                    bit,
                    stride,
                    dst,
                } if !class.is_broadcast() => {
                    let bit = bit + stride * (epoch - a.first) as usize;
                    let slots: Vec<usize> = match dst {
                        Some(d) => vec![*d],
                        None => (0..inputs.len()).collect(),
                    };
                    for slot in slots {
                        let protocol = self.cfg.ca_systems[self.cfg.decoders[slot]];
                        if *class == TamperClass::Derive {
                            for (msg, origin) in inputs[slot].iter_mut().filter(|(m, _)| m.kind == ChipMsgKind::Derive)
                            {
                                flip_bit(&mut msg.bytes, bit);
                                *origin = Origin::Adversary;
                                states[slot].interfered = true;
                            }
                            continue;
                        }
                        let kind = match class {
                            TamperClass::PkSet => ChipMsgKind::PkSetUpdate,
                            _ => ChipMsgKind::LoadLtk,
                        };
                        let Some(mut msg) = self.adversary.captured(slot, kind).cloned() else {
                            continue;
                        };
                        let bit = match class {
                            TamperClass::Certificate => bit % (credential_len(protocol, &msg.bytes) * 8).max(1),
                            _ => bit,
                        };
                        flip_bit(&mut msg.bytes, bit);
                        inputs[slot].push((msg, Origin::Adversary));
                        states[slot].interfered = true;
                    }
                }
                Action::Tamper { .. } => {}
                Action::Replay { src, dst, class } => {
                    states[*dst].interfered = true;
                    let msg = match class {
                        ReplayClass::Derive => inputs[*src]
                            .iter()
                            .find(|(m, o)| m.kind == ChipMsgKind::Derive && *o == Origin::Genuine)
                            .map(|(m, _)| m.clone()),
                        ReplayClass::LoadLtk => self.adversary.captured(*src, ChipMsgKind::LoadLtk).cloned(),
                    };
                    inputs[*dst].extend(msg.map(|m| (m, Origin::Adversary)));
                }
                Action::Inject { dst, class } => {
                    states[*dst].interfered = true;
                    let msg = match class {
                        InjectClass::ControlWord => self.adversary.inject_control_word(epoch),
                        InjectClass::Derive => {
                            let target = self.forge_target(*dst)?;
                            self.adversary.inject_derive(&target, epoch)?
                        }
                    };
                    inputs[*dst].push((msg, Origin::Adversary));
                }
                Action::Forge { dst, key } => {
                    states[*dst].interfered = true;
                    let target = self.forge_target(*dst)?;
                    let ca = self.cfg.decoders[*dst];
                    let msgs = self.adversary.forge(ca, &target, *key, epoch)?;
                    inputs[*dst].extend(msgs.into_iter().map(|m| (m, Origin::Adversary)));
                }
                Action::Compromise(Compromise::ControlWord { .. }) => {}
                other => unreachable!("event {other:?} in intercept"),
            }
        }
        Ok(())
    }

    fn report(self) -> RunReport {
        let verdicts = Verdicts::from_records(&self.records, self.recover_epoch, self.decoders_replaced);
        RunReport::new(
            self.cfg,
            self.seed,
            self.headend.systems().iter().map(|s| s.id()).collect(),
            self.records,
            self.events,
            self.ledger,
            verdicts,
        )
    }

    /// All frames broadcast so far, when capture is enabled.
    pub fn capture_file(&self) -> Option<Vec<u8>> {
        let frames = self.capture.as_ref()?;
        let mut w = Writer::new();
        w.raw(CAPTURE_MAGIC).u8(1).u32(frames.len() as u32);
        for f in frames {
            w.bytes(f);
        }
        Some(w.finish())
    }

    /// Runs to the end; the capture is empty unless built with
    /// [`World::with_capture`].
    pub fn run_with_capture(mut self) -> Result<(RunReport, Vec<u8>)> {
        for epoch in 0..self.cfg.epochs {
            self.step(epoch)?;
        }
        let capture = self.capture_file().unwrap_or_default();
        Ok((self.report(), capture))
    }
}

/// Deterministic in `(cfg, seed)`.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<RunReport> {
    World::new(cfg, seed)?.run()
}

/// Decodes a capture file into its frames.
pub fn decode_capture(bytes: &[u8]) -> hbkex_core::Result<Vec<BroadcastFrame>> {
    let mut r = hbkex_core::codec::Reader::new(bytes);
    if r.raw(4)? != CAPTURE_MAGIC {
        return Err(hbkex_core::Error::BadMagic);
    }
    let version = r.u8()?;
    if version != 1 {
        return Err(hbkex_core::Error::BadVersion(version));
    }
    let count = r.u32()? as usize;
    if count > r.remaining() / 4 {
        return Err(r.malformed("frame count exceeds input"));
    }
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        frames.push(BroadcastFrame::decode(r.bytes()?)?);
    }
    r.finish()?;
    Ok(frames)
}
