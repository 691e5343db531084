//! Named random substreams.
//!
//! Every random decision in the toolkit is drawn from a ChaCha8 stream whose
//! key is derived from the single run seed plus a path of labels such as
//! `["id", "blue_star"]`. Streams with different paths are independent, and a
//! stream never depends on how many values another stream consumed, so
//! generation order and scheduling cannot change the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Derives a 64-bit substream key from `seed` and a label path.
pub fn derive(seed: u64, path: &[&str]) -> u64 {
    let mut key = splitmix64(seed);
    for label in path {
        // Length prefix keeps ["ab", "c"] and ["a", "bc"] apart.
        let h = fnv1a(label.as_bytes(), fnv1a(&(label.len() as u64).to_le_bytes(), FNV_OFFSET));
        key = splitmix64(key ^ h);
    }
    key
}

/// Derives a key from a parent key and an integer index.
pub fn derive_index(key: u64, index: u64) -> u64 {
    splitmix64(key ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Seeded generator for the given label path.
pub fn stream(seed: u64, path: &[&str]) -> Rng {
    Rng::seed_from_u64(derive(seed, path))
}

/// Seeded generator for an already derived key.
pub fn stream_from_key(key: u64) -> Rng {
    Rng::seed_from_u64(key)
}
