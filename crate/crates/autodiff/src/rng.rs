//! Seeded ChaCha streams. Every consumer draws from its own substream
//! derived from the run seed and a purpose label, so adding draws in one
//! place never shifts the values seen elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Generator for `purpose` under `seed`.
pub fn stream(seed: u64, purpose: &str) -> StreamRng {
    substream(seed, purpose, 0)
}

/// Indexed substream, e.g. one per epoch or per instance.
pub fn substream(seed: u64, purpose: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed) ^ fnv1a(purpose));
    rng.set_stream(index);
    rng
}

/// Stable 64-bit hash of a label, for deriving child seeds.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64(splitmix64(seed) ^ fnv1a(label))
}
