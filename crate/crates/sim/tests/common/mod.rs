#![allow(dead_code)]

use hbkex_core::crypto::{Drbg, Suite};
use hbkex_core::ttp::Ttp;
use hbkex_core::Identity;
use hbkex_sim::decoder::{CaClient, Chip, ControlWordHandle, Decoder};
use hbkex_sim::headend::{BroadcastFrame, CaProtocol, Headend};

/// A hand-driven head-end with enrolled decoders and nobody authorized.
pub struct Rig {
    pub suite: Suite,
    pub ttp: Ttp,
    pub headend: Headend,
    pub decoders: Vec<Decoder>,
    pub ids: Vec<Identity>,
    pub rng: Drbg,
}

impl Rig {
    /// `systems`: protocol and decoder count of each CA system.
    pub fn new(systems: &[(CaProtocol, usize)], seed: &[u8]) -> Self {
        let suite = Suite::default();
        let mut rng = Drbg::new(seed);
        let mut ttp = Ttp::init(suite, &mut rng);
        let mut headend = Headend::new(suite, &mut rng);
        let mut chips = Vec::new();
        for (protocol, count) in systems {
            let ca = headend.add_ca_system(*protocol, &mut ttp).unwrap();
            for _ in 0..*count {
                let id = Identity(1000 + chips.len() as u64);
                let (chip, pk) = Chip::manufacture(
                    suite,
                    *protocol,
                    id,
                    Some(ttp.public_key()),
                    chips.len() as u64,
                    &mut rng,
                )
                .unwrap();
                if let Some(pk) = pk {
                    ttp.register_receiver(id, pk).unwrap();
                }
                chips.push((ca, id, chip));
            }
        }
        let dir = ttp.export().unwrap();
        headend.load_directory(&dir, ttp.public_key()).unwrap();
        let mut decoders = Vec::new();
        let mut ids = Vec::new();
        for (slot, (ca, id, chip)) in chips.into_iter().enumerate() {
            let keys = headend.provision_receiver(ca, id).unwrap();
            let client = CaClient::new(suite, headend.system(ca).unwrap().protocol(), keys);
            decoders.push(Decoder::new(slot, ca, client, chip));
            headend.enroll_receiver(ca, id, &dir, ttp.public_key()).unwrap();
            ids.push(id);
        }
        let mut rig = Self {
            suite,
            ttp,
            headend,
            decoders,
            ids,
            rng,
        };
        rig.flush();
        rig
    }

    pub fn authorize(&mut self, slot: usize, flag: bool) {
        let ca = self.decoders[slot].ca();
        self.headend.authorize(ca, self.ids[slot], flag).unwrap();
    }

    /// Delivers queued EMMs to every decoder; errors are ignored.
    pub fn flush(&mut self) -> BroadcastFrame {
        let frame = self.headend.flush_emms();
        for d in &mut self.decoders {
            d.receive(&frame);
        }
        frame
    }

    /// One epoch; per decoder, the recovered content if a handle came out.
    pub fn tick(&mut self, content: &[u8]) -> (BroadcastFrame, Vec<Option<Vec<u8>>>) {
        let frame = self.headend.epoch_tick(content).unwrap();
        let out = self
            .decoders
            .iter_mut()
            .map(|d| {
                let (handles, _) = d.receive(&frame);
                handles
                    .last()
                    .map(|h: &ControlWordHandle| d.descramble(h, frame.epoch, &frame.scrambled_content).unwrap())
            })
            .collect();
        (frame, out)
    }
}
