//! Seeded random streams.
//!
//! Every stream is keyed by `(seed, purpose, node)` through a fixed integer
//! hash and then expanded by ChaCha8, so streams do not depend on the order in
//! which they are created and are identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RngPurpose {
    Shadowing,
    TrafficJitter,
}

impl RngPurpose {
    fn tag(self) -> u64 {
        match self {
            RngPurpose::Shadowing => 0x5348_4144_4f57,
            RngPurpose::TrafficJitter => 0x4a49_5454_4552,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, purpose: RngPurpose, node: NodeId) -> u64 {
    mix64(mix64(mix64(seed) ^ purpose.tag()) ^ u64::from(node.0))
}

pub fn rng_stream(seed: u64, purpose: RngPurpose, node: NodeId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, purpose, node))
}

/// Key of the run-wide shadowing field.
pub fn shadowing_key(seed: u64) -> u64 {
    stream_seed(seed, RngPurpose::Shadowing, NodeId(u32::MAX))
}
