//! Counter-based random streams.
//!
//! Every random draw in a run is taken from a stream addressed by a
//! `(seed, purpose, a, b)` key, e.g. `(seed, EXPLORE, chain, sweep)`. The
//! stream for a key is the same regardless of the order in which keys are
//! visited, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes. Keeping them distinct guarantees exploration, swap and
/// estimator draws never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Explore = 1,
    Swap = 2,
    Parity = 3,
    Init = 4,
    Oracle = 5,
    Snr = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns the generator for one stream key.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> StreamRng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    for (i, word) in [purpose as u64, a, b, 0x5eed].into_iter().enumerate() {
        h = splitmix64(h ^ word.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        key[i * 8..(i + 1) * 8].copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
