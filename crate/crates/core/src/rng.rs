//! Named random substreams derived from one master seed.
//!
//! Every consumer of randomness (initialization, batch order, selection,
//! data generation) draws from its own stream so that changing one of them
//! never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const STREAM_INIT: &str = "init";
pub const STREAM_BATCH: &str = "batch";
pub const STREAM_SELECTION: &str = "selection";
pub const STREAM_PRETRAIN: &str = "pretrain";

/// Mixes a master seed with a stream name (FNV-1a, then a SplitMix64 finalizer).
pub fn derive_seed(master: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(master ^ splitmix(h))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(master: u64, name: &str) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, name))
}

/// Stream indexed by an extra integer, e.g. an epoch number.
pub fn indexed_stream(master: u64, name: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(splitmix(derive_seed(master, name) ^ splitmix(index)))
}
