//! Seed derivation. Every random choice in a session comes from a ChaCha12
//! stream keyed by the session seed and a short domain label, so independent
//! stages never share a stream and reruns are bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a label and an index into a child seed.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label, then splitmix to spread it.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(seed ^ h).wrapping_add(index))
}

pub fn stream(seed: u64, label: &str) -> StreamRng {
    ChaCha12Rng::seed_from_u64(derive_seed(seed, label, 0))
}

pub fn indexed_stream(seed: u64, label: &str, index: u64) -> StreamRng {
    ChaCha12Rng::seed_from_u64(derive_seed(seed, label, index))
}
