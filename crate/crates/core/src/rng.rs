//! Seeded random streams.
//!
//! All randomness flows through [`ChaCha8Rng`], whose output is specified
//! independently of platform and word size. Independent substreams are derived
//! by hashing `(seed, tags...)` with SplitMix64, so a computation split across
//! tasks draws the same numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere in the crate.
pub type LabRng = ChaCha8Rng;

/// Name of the generator, recorded in artifacts.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), substreams keyed by SplitMix64(seed, tags)";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a list of tags into a single 64-bit key.
pub fn derive_key(seed: u64, tags: &[u64]) -> u64 {
    let mut key = splitmix64(seed);
    for &tag in tags {
        key = splitmix64(key ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    key
}

/// Generator for the substream `(seed, tags...)`.
pub fn stream(seed: u64, tags: &[u64]) -> LabRng {
    LabRng::seed_from_u64(derive_key(seed, tags))
}

// stream tags
pub(crate) const TAG_SPHERE: u64 = 1;
pub(crate) const TAG_LABELS: u64 = 2;
pub(crate) const TAG_QUADRATURE: u64 = 3;
pub(crate) const TAG_INIT_SIGN: u64 = 4;
pub(crate) const TAG_INIT_DIR: u64 = 5;
pub(crate) const TAG_KERNEL_MC: u64 = 6;
pub(crate) const TAG_TEST_SET: u64 = 7;
pub(crate) const TAG_PROBES: u64 = 8;
pub(crate) const TAG_TRIAL: u64 = 9;
