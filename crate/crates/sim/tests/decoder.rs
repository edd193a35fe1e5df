mod common;

use common::Rig;
use hbkex_core::crypto::{Ciphertext, SymKey};
use hbkex_core::wire::{Addressee, Ecm};
use hbkex_core::Identity;
use hbkex_sim::adversary::flip_bit;
use hbkex_sim::decoder::{ChipMsg, ChipMsgKind};
use hbkex_sim::headend::CaProtocol;
use hbkex_sim::SimError;

const CONTENT: &[u8] = b"decoder-side content";

#[test]
fn other_receivers_emms_are_ignored_and_tampered_ones_rejected() {
    let mut rig = Rig::new(&[(CaProtocol::P2, 2)], b"emm handling");
    rig.headend.rotate_sender_key(0, &mut rig.ttp).unwrap();
    let frame = rig.headend.flush_emms();
    let client = rig.decoders[0].client().clone();
    let mut enroll_for_1 = None;
    for emm in &frame.emms {
        let mut c = client.clone();
        let msgs = c.process_emm(emm).unwrap();
        let decoded = hbkex_core::wire::Emm::decode(emm).unwrap();
        if decoded.addressee == Addressee::Receiver(rig.ids[1]) {
            assert!(msgs.is_empty());
            enroll_for_1 = Some(emm.clone());
        }
        let mut bad = emm.clone();
        let bits = bad.len() * 8;
        flip_bit(&mut bad, bits - 1);
        let mut c = client.clone();
        let result = c.process_emm(&bad);
        if decoded.addressee == Addressee::Receiver(rig.ids[1]) {
            assert!(matches!(result, Ok(ref m) if m.is_empty()));
        } else {
            assert!(result.is_err());
        }
    }
    assert!(enroll_for_1.is_some());
}

#[test]
fn entitled_client_wraps_the_broadcast_secret_under_the_chip_key() {
    let mut rig = Rig::new(&[(CaProtocol::P2, 3)], b"wrap");
    rig.authorize(0, true);
    rig.authorize(1, true);
    rig.flush();
    let frame = rig.headend.epoch_tick(CONTENT).unwrap();
    let group = rig.headend.system(0).unwrap().group_key().clone();
    let r = Ecm::decode(&frame.ecms[0]).unwrap().open(&rig.suite, &group).unwrap();
    let mut derives = Vec::new();
    for slot in 0..3 {
        let msg = rig.decoders[slot].client_mut().process_ecm(&frame.ecms[0]).unwrap();
        if slot == 2 {
            assert!(msg.is_none(), "unentitled client must stay silent");
            continue;
        }
        let msg = msg.unwrap();
        assert_eq!(msg.kind, ChipMsgKind::Derive);
        // lp(pk) || lp(ct), decrypted with the sender's LK for this receiver.
        let pk_len = u32::from_be_bytes(msg.bytes[..4].try_into().unwrap()) as usize;
        let ct = Ciphertext(msg.bytes[4 + pk_len + 4..].to_vec());
        let lk: &SymKey = rig.headend.sender_ltk(0, rig.ids[slot]).unwrap();
        assert_eq!(rig.suite.sym_decrypt(lk, &ct).unwrap(), r.as_slice());
        derives.push(msg);
    }
    assert_ne!(derives[0].bytes, derives[1].bytes);
}

#[test]
fn chip_rejects_out_of_order_foreign_and_raw_messages() {
    for protocol in [CaProtocol::P1, CaProtocol::P2] {
        let mut rig = Rig::new(&[(protocol, 2)], b"chip checks");
        rig.authorize(0, true);
        rig.authorize(1, true);
        rig.flush();
        let frame = rig.headend.epoch_tick(CONTENT).unwrap();
        let out0 = rig.decoders[0].client_stage(&frame);
        let derive0 = out0
            .msgs
            .iter()
            .find(|m| m.kind == ChipMsgKind::Derive)
            .unwrap()
            .clone();

        // Replay of decoder 0's derive into decoder 1: wrong LK.
        let before = format!("{:?}", rig.decoders[1].chip());
        assert!(
            rig.decoders[1].chip_process(&derive0, frame.epoch).is_err(),
            "{protocol}"
        );
        assert_eq!(before, format!("{:?}", rig.decoders[1].chip()));

        // A raw control word is not an accepted message kind.
        let k = rig.headend.current_control_word().unwrap().as_bytes().to_vec();
        assert!(matches!(
            rig.decoders[1].chip_process(&ChipMsg::control_word(&k), frame.epoch),
            Err(SimError::UnsupportedChipMessage("control_word"))
        ));

        // A fresh chip with no long-term key cannot derive.
        let mut fresh = Rig::new(&[(protocol, 1)], b"fresh chip");
        fresh.headend.retire_receiver(0, fresh.ids[0]).unwrap();
        let mut d = fresh.decoders.remove(0);
        assert!(d.chip_process(&derive0, 0).is_err());
    }
}

#[test]
fn handles_are_scoped_to_their_epoch_and_chip() {
    let mut rig = Rig::new(&[(CaProtocol::P2, 2)], b"handles");
    rig.authorize(0, true);
    rig.authorize(1, true);
    let f0 = rig.headend.epoch_tick(CONTENT).unwrap();
    let (h0, _) = rig.decoders[0].receive(&f0);
    let (h1, _) = rig.decoders[1].receive(&f0);
    let h0 = h0[0];
    assert_eq!(
        rig.decoders[0]
            .descramble(&h0, f0.epoch, &f0.scrambled_content)
            .unwrap(),
        CONTENT
    );
    assert!(matches!(
        rig.decoders[1].descramble(&h0, f0.epoch, &f0.scrambled_content),
        Err(SimError::StaleHandle)
    ));
    assert!(matches!(
        rig.decoders[0].descramble(&h0, f0.epoch + 1, &f0.scrambled_content),
        Err(SimError::StaleHandle)
    ));
    let f1 = rig.headend.epoch_tick(CONTENT).unwrap();
    rig.decoders[0].receive(&f1);
    assert!(matches!(
        rig.decoders[0].descramble(&h0, f0.epoch, &f0.scrambled_content),
        Err(SimError::StaleHandle)
    ));
    assert_eq!(h1.len(), 1);
}

#[test]
fn wrong_key_handle_does_not_yield_the_content() {
    let mut rig = Rig::new(&[(CaProtocol::P2, 1)], b"wrong key");
    rig.authorize(0, true);
    let frame = rig.headend.epoch_tick(CONTENT).unwrap();
    let msgs = rig.decoders[0].client_stage(&frame).msgs;
    let mut derive = msgs.into_iter().find(|m| m.kind == ChipMsgKind::Derive).unwrap();
    // Point the derive at a key set the chip accepts but the head-end did not use.
    let pk = rig.decoders[0].client().sender_pk().unwrap().clone();
    let other = hbkex_core::crypto::PublicKey::from_bytes(vec![0x42; pk.len()]);
    let mut set = vec![pk, other];
    set.sort();
    rig.decoders[0]
        .chip_process(&ChipMsg::pk_set(&set), frame.epoch)
        .unwrap();
    let h = rig.decoders[0].chip_process(&derive, frame.epoch).unwrap().unwrap();
    let out = rig.decoders[0]
        .descramble(&h, frame.epoch, &frame.scrambled_content)
        .unwrap();
    assert_ne!(out, CONTENT);
    let bits = derive.bytes.len() * 8;
    flip_bit(&mut derive.bytes, bits - 3);
    assert!(rig.decoders[0].chip_process(&derive, frame.epoch).is_err());
}

#[test]
fn second_load_for_the_same_sender_overwrites() {
    let mut rig = Rig::new(&[(CaProtocol::P2, 1)], b"overwrite");
    rig.authorize(0, true);
    rig.flush();
    assert_eq!(rig.tick(CONTENT).1[0].as_deref(), Some(CONTENT));
    // Re-run enrollment under the same sender key: new LK replaces the old in sender,
    // client and chip.
    let dir = rig.ttp.export().unwrap();
    let pk_t = rig.ttp.public_key().clone();
    let old = rig.headend.sender_ltk(0, rig.ids[0]).unwrap().clone();
    rig.headend.enroll_receiver(0, rig.ids[0], &dir, &pk_t).unwrap();
    assert_ne!(rig.headend.sender_ltk(0, rig.ids[0]).unwrap(), &old);
    rig.flush();
    assert_eq!(rig.tick(CONTENT).1[0].as_deref(), Some(CONTENT));
}

#[test]
fn secrets_do_not_leak_through_debug_output() {
    let mut rig = Rig::new(&[(CaProtocol::P1, 1), (CaProtocol::P2, 1)], b"isolation");
    rig.authorize(0, true);
    rig.authorize(1, true);
    let (frame, _) = rig.tick(CONTENT);
    let k = rig.headend.current_control_word().unwrap().as_bytes().to_vec();
    for slot in 0..2 {
        let lk = rig
            .headend
            .sender_ltk(rig.decoders[slot].ca(), rig.ids[slot])
            .unwrap()
            .clone();
        let dump = format!("{:?}", rig.decoders[slot]);
        for secret in [&k[..], lk.as_bytes()] {
            let hex: String = secret.iter().map(|b| format!("{b:02x}")).collect();
            let list = format!("{secret:?}");
            let inner = &list[1..list.len() - 1];
            assert!(!dump.contains(&hex) && !dump.contains(inner), "slot {slot} leaks");
        }
    }
    assert_eq!(frame.epoch, 0);
}

#[test]
fn client_swap_keeps_the_chip() {
    let mut rig = Rig::new(&[(CaProtocol::P2, 1)], b"swap");
    rig.authorize(0, true);
    assert_eq!(rig.tick(CONTENT).1[0].as_deref(), Some(CONTENT));
    rig.headend.rotate_channel_keys(0).unwrap();
    let keys = rig.headend.client_keys(0, rig.ids[0]).unwrap();
    let serial = rig.decoders[0].chip().serial();
    let fresh = hbkex_sim::decoder::CaClient::new(rig.suite, CaProtocol::P2, keys);
    rig.decoders[0].swap_client(fresh);
    assert_eq!(rig.decoders[0].chip().serial(), serial);
    rig.headend.reannounce(0).unwrap();
    rig.headend.rotate_sender_key(0, &mut rig.ttp).unwrap();
    rig.headend.resend_entitlements(0).unwrap();
    rig.flush();
    assert_eq!(rig.tick(CONTENT).1[0].as_deref(), Some(CONTENT));
    assert_eq!(rig.decoders[0].chip().id(), Some(Identity(1000)));
}

#[test]
fn legacy_chip_takes_raw_control_words_only() {
    let mut rig = Rig::new(&[(CaProtocol::Legacy, 1)], b"legacy");
    rig.authorize(0, true);
    let (frame, out) = rig.tick(CONTENT);
    assert_eq!(out[0].as_deref(), Some(CONTENT));
    let derive = ChipMsg::derive(None, &Ciphertext(vec![0; 44]));
    assert!(rig.decoders[0].chip_process(&derive, frame.epoch).is_err());
}
