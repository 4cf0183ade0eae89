//! Seed derivation and stable hashing.
//!
//! Everything stochastic in the crate flows through these helpers so that runs
//! are reproducible across platforms and thread counts.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit hash over a sequence of byte strings.
///
/// Each part is length-prefixed so `["ab", "c"]` and `["a", "bc"]` differ.
pub fn stable_hash<I, P>(parts: I) -> u64
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let mut hasher = FnvHasher::default();
    for part in parts {
        let bytes = part.as_ref();
        hasher.write_u64(bytes.len() as u64);
        hasher.write(bytes);
    }
    mix(hasher.finish())
}

/// splitmix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed for a numbered stream.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Child seed for a named stream, e.g. one per sublabel.
pub fn named_seed(seed: u64, name: &str) -> u64 {
    sub_seed(seed, stable_hash([name.as_bytes()]))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Maps a hash onto `[-1, 1]` using its top 53 bits.
pub fn signed_unit(hash: u64) -> f64 {
    let unit = (hash >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * unit - 1.0
}
