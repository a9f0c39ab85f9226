//! Deterministic randomness.
//!
//! Every gate draws from its own ChaCha stream keyed by the run seed and
//! selected by the gate index, so the outcome of gate `g` does not depend
//! on how the gate range is sharded across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunSeed(pub u64);

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; a bijection on `u64`.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of shard `shard_index`.
///
/// For a fixed parent the map is injective: the odd-gamma Weyl step is a
/// bijection modulo 2^64 and so is the finalizer.
pub fn split_seed(seed: RunSeed, shard_index: u64) -> RunSeed {
    RunSeed(mix64(
        seed.0
            .wrapping_add(GOLDEN_GAMMA.wrapping_mul(shard_index.wrapping_add(1))),
    ))
}

/// Independent draw streams used by different parts of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Gates = 0,
    Waveform = 1,
}

/// Factory for per-gate generators.
#[derive(Clone)]
pub struct GateStreams {
    base: ChaCha8Rng,
}

impl GateStreams {
    pub fn new(seed: RunSeed, domain: Domain) -> Self {
        let key = split_seed(seed, domain as u64);
        Self {
            base: ChaCha8Rng::seed_from_u64(key.0),
        }
    }

    pub fn rng(&self, gate_index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(gate_index);
        rng.set_word_pos(0);
        rng
    }
}
