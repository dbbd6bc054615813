//! Counter-based random streams keyed by `(master seed, replicate, p)` and a
//! stream tag, so every draw is independent of scheduling and run order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Design = 1,
    Beta = 2,
    Noise = 3,
    Auxiliary = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one replicate at dimension `p`; printed in every CSV row.
pub fn replicate_seed(master: u64, replicate: usize, p: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ replicate as u64) ^ p as u64)
}

/// Independent ChaCha20 stream for `tag` under a replicate seed.
pub fn stream(seed: u64, tag: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(tag as u64);
    rng
}
