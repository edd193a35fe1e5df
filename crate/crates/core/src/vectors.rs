//! Fixed-input vectors that freeze the byte-level behavior of the suite, the
//! binding function and the wire formats. Names are stable; values must
//! never change across platforms or releases.

use crate::binding::{derive_k, HInput};
use crate::crypto::{Drbg, KeyPurpose, PublicKey, Suite, SymKey};
use crate::error::Result;
use crate::wire::{Addressee, Ecm, EmmPayload};

pub const GOLDEN_PLAINTEXT: &[u8; 32] = b"golden vector plaintext 32 bytes";
pub const GOLDEN_SIGNED: &[u8] = b"golden signed message";
pub const GOLDEN_CA_SYSTEM: u16 = 0x0b01;
pub const GOLDEN_EPOCH: u64 = 42;

/// `(name, bytes)` pairs in a fixed order, under the default suite.
pub fn golden_vectors() -> Result<Vec<(&'static str, Vec<u8>)>> {
    let suite = Suite::default();
    let n = suite.config().secret_len_bits;
    let mut out = Vec::new();

    out.push(("sha512_abc", suite.hash(b"abc").to_vec()));

    let single: Vec<u8> = (0xa0..0xb0).collect();
    let key: Vec<u8> = (0..32).collect();
    let input = HInput::new(vec![PublicKey::from_bytes(key)], &single, n)?;
    out.push(("derive_k_single_n128", derive_k(&input, n)?.as_bytes().to_vec()));

    let pair = vec![
        PublicKey::from_bytes(vec![0x11; 32]),
        PublicKey::from_bytes(vec![0x22; 32]),
    ];
    let input = HInput::new(pair, &[0x5a; 16], n)?;
    out.push(("derive_k_pair_n128", derive_k(&input, n)?.as_bytes().to_vec()));

    let sym_key: Vec<u8> = (0..16).collect();
    out.push((
        "sym_seal",
        suite.sym_encrypt(&SymKey::from_bytes(&sym_key), GOLDEN_PLAINTEXT)?.0,
    ));

    let pke = suite.keygen(KeyPurpose::Pke, &mut Drbg::new(b"golden pke"));
    out.push(("pke_public", pke.public.as_bytes().to_vec()));
    let ct = suite.pke_encrypt(&pke.public, &[0x42; 16], &mut Drbg::new(b"golden pke eph"))?;
    out.push(("pke_ciphertext", ct.0));

    let sig = suite.keygen(KeyPurpose::Sig, &mut Drbg::new(b"golden sig"));
    out.push(("sig_public", sig.public.as_bytes().to_vec()));
    out.push(("signed_message", suite.sign(&sig.private, GOLDEN_SIGNED)?.to_bytes()));

    let group = SymKey::from_bytes(&[0x11; 16]);
    let ecm = Ecm::seal(&suite, &group, GOLDEN_CA_SYSTEM, GOLDEN_EPOCH, &[0x22; 16])?;
    out.push(("ecm", ecm.encode()));
    let emm = EmmPayload::SenderPk(PublicKey::from_bytes(vec![0x33; 32])).seal(
        &suite,
        &group,
        GOLDEN_CA_SYSTEM,
        Addressee::Broadcast,
    )?;
    out.push(("emm_sender_pk", emm.encode()));
    Ok(out)
}

/// The vectors in the `name hex` line format used by the checked-in file.
pub fn render_golden_vectors() -> Result<String> {
    let mut s = String::from("# name hex\n");
    for (name, bytes) in golden_vectors()? {
        s.push_str(name);
        s.push(' ');
        for b in bytes {
            s.push_str(&format!("{b:02x}"));
        }
        s.push('\n');
    }
    Ok(s)
}
