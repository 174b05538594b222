//! Counter-based random substreams.
//!
//! Every stochastic quantity is drawn from a generator keyed by
//! `(seed, domain, a, b)`, so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Independent stream families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Channel = 1,
    Noise = 2,
    Symbols = 3,
    Task = 4,
    Gradient = 5,
    Trial = 6,
    Probe = 7,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the stream for `(seed, domain, a, b)`.
pub fn substream(seed: u64, domain: Domain, a: u64, b: u64) -> Stream {
    let mut key = [0u8; 32];
    let mut h = splitmix(seed ^ splitmix(domain as u64));
    for (i, word) in [a, b, 0x5eed, 0xa1c0].iter().enumerate() {
        h = splitmix(h ^ splitmix(*word).rotate_left(i as u32 * 13));
        key[i * 8..(i + 1) * 8].copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Mix a label into a seed, for deriving per-configuration seeds.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix(seed ^ splitmix(label.wrapping_mul(0x2545_f491_4f6c_dd1d)))
}
