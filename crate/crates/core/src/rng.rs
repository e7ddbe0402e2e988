//! Seeded random streams.
//!
//! Every stochastic choice draws from a ChaCha8 stream derived from the run
//! seed, a purpose tag and an index, so enabling one feature never shifts
//! the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Clip = 3,
    Crop = 4,
    ClassMeans = 5,
    Basis = 6,
    Sample = 7,
    Split = 8,
    Rotation = 9,
    Lengths = 10,
    Pathway = 11,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A child seed for `(seed, purpose, index)`, for handing to nested components.
pub fn derive_seed(seed: u64, purpose: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(purpose as u64)) ^ index)
}

/// Independent generator for `(seed, purpose, index)`.
pub fn substream(seed: u64, purpose: Stream, index: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose, index));
    rng.set_stream(purpose as u64);
    rng
}
