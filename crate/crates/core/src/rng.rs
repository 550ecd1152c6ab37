//! Stable seed derivation. Every random stream in the crate is keyed by a
//! SHA-256 of the scenario seed and a path of labels, so streams never
//! depend on scheduling or on how many draws another stream made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_key(seed: u64, parts: &[&str]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        // length prefix keeps ("ab","c") and ("a","bc") apart
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().into()
}

pub fn derive_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(seed, parts))
}

/// A uniform draw in [0, 1) fixed by the key path.
pub fn derive_unit(seed: u64, parts: &[&str]) -> f64 {
    let key = derive_key(seed, parts);
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&key[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

pub fn derive_hex(seed: u64, parts: &[&str], len: usize) -> String {
    let mut s = hex::encode(derive_key(seed, parts));
    s.truncate(len);
    s
}
