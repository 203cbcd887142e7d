//! Seed derivation.
//!
//! Every random stream in a run is derived from one 64-bit seed plus a component
//! label and an index, so independent components never share a stream and any
//! single stream can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"ivxv-sim/rng/v1";

fn derive_bytes(seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN);
    hasher.update(seed.to_be_bytes());
    hasher.update((label.len() as u32).to_be_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_be_bytes());
    hasher.finalize().into()
}

/// A ChaCha20 stream for `(seed, label, index)`.
pub fn derive_rng(seed: u64, label: &str, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_bytes(seed, label, index))
}

/// A child seed for `(seed, label, index)`, e.g. one per Monte Carlo trial.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let bytes = derive_bytes(seed, label, index);
    u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes"))
}
