//! Deterministic random streams.
//!
//! Every independent unit of work (a task inside a meta-batch, an evaluation
//! episode, a training run) owns a ChaCha8 stream derived from the master
//! seed and a `(domain, index)` pair. Streams never depend on execution
//! order, so serial and parallel runs draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream domains. Keeping them distinct stops e.g. evaluation episode 3 from
/// reusing the numbers of meta-training batch 3.
pub mod domain {
    pub const META_BATCH: u64 = 0x6d62;
    pub const TASK: u64 = 0x7461;
    pub const EVAL: u64 = 0x6576;
    pub const INIT: u64 = 0x696e;
    pub const TRAIN_GEN: u64 = 0x7467;
    pub const SCRATCH: u64 = 0x7363;
    pub const SPLIT: u64 = 0x7370;
    pub const SYNTH: u64 = 0x7379;
    pub const DUMP: u64 = 0x6475;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from a parent seed and a `(domain, index)` label.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(domain)).wrapping_add(index))
}

pub fn stream(seed: u64, domain: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, domain, index))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
