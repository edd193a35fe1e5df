//! Byte accounting per message class.

use std::fmt;

use hbkex_core::wire::{EmmKind, EMM_MAGIC};

use crate::decoder::ChipMsg;
use crate::headend::BroadcastFrame;

/// Offset of the kind byte in an encoded EMM: magic, version, CA id.
const EMM_KIND_OFFSET: usize = EMM_MAGIC.len() + 1 + 2;

/// Broadcast bytes by class, plus bytes on the in-decoder chip channel.
/// Chip-channel traffic never reaches the broadcast totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BandwidthLedger {
    pub ecm: u64,
    pub emm_broadcast: u64,
    pub emm_per_receiver: u64,
    pub content: u64,
    pub chip_channel: u64,
}

impl BandwidthLedger {
    pub fn record_frame(&mut self, frame: &BroadcastFrame) {
        self.ecm += frame.ecms.iter().map(|e| e.len() as u64).sum::<u64>();
        for emm in &frame.emms {
            let per_receiver = emm
                .get(EMM_KIND_OFFSET)
                .and_then(|k| EmmKind::try_from(*k).ok())
                .is_some_and(EmmKind::is_per_receiver);
            if per_receiver {
                self.emm_per_receiver += emm.len() as u64;
            } else {
                self.emm_broadcast += emm.len() as u64;
            }
        }
        self.content += frame.scrambled_content.len() as u64;
    }

    pub fn record_chip_msg(&mut self, msg: &ChipMsg) {
        self.chip_channel += msg.wire_len() as u64;
    }

    pub fn emm_total(&self) -> u64 {
        self.emm_broadcast + self.emm_per_receiver
    }

    /// Everything sent over the air.
    pub fn broadcast_total(&self) -> u64 {
        self.ecm + self.emm_total() + self.content
    }
}

impl fmt::Display for BandwidthLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ecm={} emm_broadcast={} emm_per_receiver={} content={} broadcast_total={} chip_channel={}",
            self.ecm,
            self.emm_broadcast,
            self.emm_per_receiver,
            self.content,
            self.broadcast_total(),
            self.chip_channel
        )
    }
}
