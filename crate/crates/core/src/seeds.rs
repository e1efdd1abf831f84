//! Counter-based seed derivation.
//!
//! Every random stream in a run (environment resets, weight init, action
//! sampling, replay sampling, expert resampling) gets its own seed derived
//! from the master seed and a stream label, so changing how much one stream
//! is consumed never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for stream `label`, sub-index `index`, of a run seeded with `master`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ label_hash(label)).wrapping_add(index))
}

pub fn stream_rng(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}
