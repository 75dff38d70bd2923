//! Seed-splitting for reproducible, order-independent random streams.
//!
//! Every random draw in the crate is taken from a substream keyed by
//! `(root seed, domain tag, index)`, so the same draw index yields the same
//! randomness regardless of how many other draws happen or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags separating independent uses of one root seed.
pub mod tag {
    pub const LABELS: u64 = 1;
    pub const CENTERS: u64 = 2;
    pub const LATENT: u64 = 3;
    pub const LOADINGS: u64 = 4;
    pub const OBSERVED: u64 = 5;
    pub const SIM_LABELS: u64 = 6;
    pub const REL_LABELS: u64 = 7;
    pub const SIM_KEEP: u64 = 8;
    pub const REL_KEEP: u64 = 9;
    pub const ANCHORS: u64 = 10;
    pub const KMEANS: u64 = 11;
    pub const SPECTRAL: u64 = 12;
    pub const HELDOUT: u64 = 13;
    pub const REPLICATION: u64 = 14;
    pub const VMF: u64 = 15;
    pub const NOISE: u64 = 16;
    pub const SPLIT: u64 = 17;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and a domain tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_mul(0xA24B_AED4_963E_E407)))
}

/// Independent substream for draw `index` within domain `tag`.
pub fn substream(seed: u64, tag: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tag));
    rng.set_stream(index);
    rng
}
