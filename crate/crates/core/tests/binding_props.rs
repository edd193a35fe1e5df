use std::collections::{HashMap, HashSet};

use hbkex_core::binding::{derive_k, encode_h_input, second_preimage_strength, HInput};
use hbkex_core::crypto::{Drbg, PublicKey};
use proptest::prelude::*;
use sha2::{Digest, Sha512};

fn pk(bytes: &[u8]) -> PublicKey {
    PublicKey::from_bytes(bytes.to_vec())
}

/// 16-bit output of `h` on the toy universe: 2-byte keys, 2-byte `r`.
fn toy_h(keys: &[PublicKey], r: u16) -> u16 {
    let input = HInput::new(keys.to_vec(), &r.to_be_bytes(), 16).unwrap();
    let k = derive_k(&input, 16).unwrap();
    u16::from_be_bytes(k.as_bytes().try_into().unwrap())
}

#[test]
fn encoding_is_injective_on_toy_universe() {
    let keys: Vec<PublicKey> = (0u16..16).map(|k| pk(&(k * 4099).to_be_bytes())).collect();
    let mut lists: Vec<Vec<PublicKey>> = keys.iter().map(|k| vec![k.clone()]).collect();
    for i in 0..keys.len() {
        for j in 0..keys.len() {
            if keys[i] < keys[j] {
                lists.push(vec![keys[i].clone(), keys[j].clone()]);
            }
        }
    }
    let mut seen = HashSet::new();
    let mut count = 0;
    for list in &lists {
        for r in 0u16..256 {
            let input = HInput::new(list.clone(), &(r * 257).to_be_bytes(), 16).unwrap();
            assert!(seen.insert(encode_h_input(&input)), "collision at {list:?} r={r}");
            count += 1;
        }
    }
    assert_eq!(count, (16 + 120) * 256);
}

#[test]
fn output_matches_independent_sha512() {
    let r = [0x01, 0x02];
    let keys = [pk(&[0x10, 0x00]), pk(&[0x20, 0x00])];
    let input = HInput::new(keys.to_vec(), &r, 16).unwrap();
    let oracle = Sha512::digest([0x01, 0x02, 0x10, 0x00, 0x20, 0x00]);
    assert_eq!(derive_k(&input, 512).unwrap().as_bytes(), oracle.as_slice());
    assert_eq!(derive_k(&input, 128).unwrap().as_bytes(), &oracle[..16]);
}

/// Second-preimage proxy: over 4096 single-key inputs, the number of
/// colliding pairs on a 16-bit output must look like a random function
/// (expected C(4096, 2) / 2^16 ~ 128; Poisson sd ~ 11.3, bound at 6 sd).
#[test]
fn toy_collisions_match_random_function() {
    let mut buckets: HashMap<u16, u64> = HashMap::new();
    for k in 0u16..64 {
        let key = [pk(&(k.wrapping_mul(7919)).to_be_bytes())];
        for r in 0u16..64 {
            *buckets.entry(toy_h(&key, r.wrapping_mul(1021))).or_default() += 1;
        }
    }
    let pairs: u64 = buckets.values().map(|c| c * (c - 1) / 2).sum();
    assert!((60..=196).contains(&pairs), "colliding pairs {pairs}");
}

/// Second preimages of one fixed target over the whole toy universe of
/// 2^16 `r` values for one key and 2^8 keys for one `r`: about one hit
/// per 2^16 trials.
#[test]
fn toy_second_preimages_are_rare() {
    let target_key = [pk(&[0xab, 0xcd])];
    let target = toy_h(&target_key, 0x1234);
    let by_r = (0u16..=u16::MAX)
        .filter(|&r| r != 0x1234 && toy_h(&target_key, r) == target)
        .count();
    let by_key = (0u16..256)
        .map(|k| pk(&(k * 251 + 1).to_be_bytes()))
        .filter(|k| k.as_bytes() != [0xab, 0xcd] && toy_h(std::slice::from_ref(k), 0x1234) == target)
        .count();
    // Poisson(1): P(X > 8) < 1e-5.
    assert!(by_r <= 8, "second preimages over r: {by_r}");
    assert!(by_key <= 2, "second preimages over keys: {by_key}");
}

/// Unpredictability proxy: with `r` hidden, the best fixed guess of `K` for
/// a known key succeeds at most a few times in 2^16, and 2^20 uniform
/// guesses hit about 2^4 times.
#[test]
fn toy_k_is_unpredictable_without_r() {
    let key = [pk(&[0x42, 0x42])];
    let mut counts = vec![0u32; 1 << 16];
    for r in 0u16..=u16::MAX {
        counts[toy_h(&key, r) as usize] += 1;
    }
    let best = *counts.iter().max().unwrap();
    assert!(best <= 12, "most likely K has {best} preimages out of 65536");

    let mut rng = Drbg::new(b"guessing");
    let hits = (0..(1u32 << 20))
        .filter(|_| {
            let guess = u16::from_be_bytes(rng.array());
            let r = u16::from_be_bytes(rng.array());
            toy_h(&key, r) == guess
        })
        .count();
    assert!((2..=40).contains(&hits), "hits {hits}");
}

#[test]
fn perturbing_any_key_changes_k() {
    let mut rng = Drbg::new(b"perturb");
    let mut keys: Vec<PublicKey> = (0..4).map(|_| pk(&rng.bytes(32))).collect();
    keys.sort();
    let r = rng.bytes(16);
    let base = derive_k(&HInput::new(keys.clone(), &r, 128).unwrap(), 128).unwrap();
    for trial in 0..100 {
        let mut changed = keys.clone();
        let i = trial % changed.len();
        let mut bytes = changed[i].as_bytes().to_vec();
        let pos = rng.next_u64() as usize % bytes.len();
        bytes[pos] ^= 1 + (rng.next_u64() % 255) as u8;
        changed[i] = pk(&bytes);
        let k = derive_k(&HInput::from_unordered(changed, &r, 128).unwrap(), 128).unwrap();
        assert_ne!(k, base, "trial {trial}");
    }
}

#[test]
fn multi_key_order_is_canonical() {
    let (a, b, c) = (pk(&[3; 32]), pk(&[1; 32]), pk(&[2; 32]));
    let r = [9; 16];
    let one = HInput::from_unordered(vec![a.clone(), b.clone(), c.clone()], &r, 128).unwrap();
    let two = HInput::from_unordered(vec![c, a, b], &r, 128).unwrap();
    assert_eq!(derive_k(&one, 128).unwrap(), derive_k(&two, 128).unwrap());
}

#[test]
fn strength_is_n_for_every_reachable_length() {
    // At most 16 sender keys of up to 64 bytes plus a 256-bit r.
    let max_len_bits = (16 * 64 * 8 + 256) as u64;
    for n in [128, 192, 256] {
        for len in [1 << 10, max_len_bits, 1 << 20, 1 << 40] {
            assert_eq!(second_preimage_strength(n, len), n);
        }
    }
}

proptest! {
    #[test]
    fn truncation_is_prefix(r in any::<[u8; 16]>(), key in any::<[u8; 32]>(), n in 1u32..=64) {
        let input = HInput::new(vec![pk(&key)], &r, 128).unwrap();
        let full = derive_k(&input, 512).unwrap();
        let short = derive_k(&input, n * 8).unwrap();
        prop_assert_eq!(short.as_bytes(), &full.as_bytes()[..n as usize]);
    }

    #[test]
    fn same_r_different_sets_differ(r in any::<[u8; 16]>(), a in any::<[u8; 32]>(), b in any::<[u8; 32]>()) {
        prop_assume!(a != b);
        let ka = derive_k(&HInput::new(vec![pk(&a)], &r, 128).unwrap(), 128).unwrap();
        let kab = derive_k(&HInput::from_unordered(vec![pk(&a), pk(&b)], &r, 128).unwrap(), 128).unwrap();
        prop_assert_ne!(ka, kab);
    }

    #[test]
    fn strength_never_exceeds_n_or_bound(n in 1u32..=512, exp in 10u32..=60) {
        let s = second_preimage_strength(n, 1u64 << exp);
        prop_assert_eq!(s, n.min(512 - (exp - 10)));
    }

    #[test]
    fn sixteen_sender_inputs_keep_full_strength(senders in 1u64..=16, n in prop::sample::select(vec![128u32, 192, 256])) {
        let len = senders * 32 * 8 + n as u64;
        prop_assert_eq!(second_preimage_strength(n, len.max(1 << 10)), n);
    }
}
