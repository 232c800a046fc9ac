//! Keyed random substreams.
//!
//! Every stochastic draw in a run comes from a substream derived from
//! `(scenario seed, domain, key parts)`. Substreams are independent of one
//! another, so changing the topology or the ego model never perturbs the
//! sensing draws of an unrelated agent or tick.
//!
//! Seed derivation: FNV-1a 64 over the domain bytes, folded with the seed and
//! each key part through the SplitMix64 finalizer; four further SplitMix64
//! outputs form the 32-byte generator seed (little-endian words).

use rand::SeedableRng;
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RngKind {
    #[default]
    #[serde(rename = "chacha8")]
    ChaCha8,
    #[serde(rename = "chacha20")]
    ChaCha20,
}

/// A deterministic generator for one substream.
pub enum SimRng {
    ChaCha8(ChaCha8Rng),
    ChaCha20(ChaCha20Rng),
}

impl rand::RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        match self {
            SimRng::ChaCha8(r) => r.next_u32(),
            SimRng::ChaCha20(r) => r.next_u32(),
        }
    }

    fn next_u64(&mut self) -> u64 {
        match self {
            SimRng::ChaCha8(r) => r.next_u64(),
            SimRng::ChaCha20(r) => r.next_u64(),
        }
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        match self {
            SimRng::ChaCha8(r) => r.fill_bytes(dst),
            SimRng::ChaCha20(r) => r.fill_bytes(dst),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Stable 64-bit key for a string identifier (agent ids, sensor ids).
pub fn key_of(s: &str) -> u64 {
    fnv1a(s.as_bytes())
}

pub fn derive_seed(seed: u64, domain: &str, parts: &[u64]) -> [u8; 32] {
    let mut state = splitmix64(seed ^ fnv1a(domain.as_bytes()));
    for &p in parts {
        state = splitmix64(state ^ p);
    }
    let mut out = [0u8; 32];
    for chunk in out.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    out
}

pub fn substream(kind: RngKind, seed: u64, domain: &str, parts: &[u64]) -> SimRng {
    let bytes = derive_seed(seed, domain, parts);
    match kind {
        RngKind::ChaCha8 => SimRng::ChaCha8(ChaCha8Rng::from_seed(bytes)),
        RngKind::ChaCha20 => SimRng::ChaCha20(ChaCha20Rng::from_seed(bytes)),
    }
}
