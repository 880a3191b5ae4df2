//! Counter-based random streams.
//!
//! Every consumer of randomness (parameter init, dropout masks, shuffling,
//! OOV vectors) derives its own ChaCha stream from the run seed plus a list
//! of integer keys, so results never depend on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a list of keys into a single stream id.
pub fn mix_keys(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// A generator for `(seed, keys…)`. Identical inputs give identical streams.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mix_keys(keys));
    rng
}

/// Stream keyed by a name, e.g. a parameter name.
pub fn named_stream(seed: u64, name: &str, keys: &[u64]) -> ChaCha8Rng {
    let mut all = Vec::with_capacity(keys.len() + 1);
    all.push(fnv1a(name.as_bytes()));
    all.extend_from_slice(keys);
    stream(seed, &all)
}
