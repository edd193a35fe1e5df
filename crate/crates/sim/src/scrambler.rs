//! Stand-in for the content cipher: XOR with a SHA-512 keystream over
//! `(K, epoch, block)`. Not a real cipher; it only has to make a wrong `K`
//! produce wrong plaintext.

use sha2::{Digest, Sha512};

const LABEL: &[u8] = b"hbkex scrambler v1";

#[derive(Debug, Clone, Copy, Default)]
pub struct ContentScrambler;

impl ContentScrambler {
    /// Scrambling and descrambling are the same operation.
    pub fn apply(key: &[u8], epoch: u64, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(data.len());
        for (block, chunk) in data.chunks(64).enumerate() {
            let mut h = Sha512::new();
            h.update(LABEL);
            h.update((key.len() as u32).to_be_bytes());
            h.update(key);
            h.update(epoch.to_be_bytes());
            h.update((block as u64).to_be_bytes());
            let stream = h.finalize();
            out.extend(chunk.iter().zip(stream.iter()).map(|(a, b)| a ^ b));
        }
        out
    }
}
