//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 keystream keyed by
//! the user seed. The 64-bit ChaCha stream id selects an independent substream,
//! and is derived by hashing a purpose tag together with up to two indices
//! (typically layer and row). A given (seed, tag, i, j) therefore always yields
//! the same numbers regardless of the order in which streams are consumed or how
//! work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Purpose tags for stream derivation. Values are part of the reproducibility
/// contract and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Weights = 1,
    OutputSigns = 2,
    Data = 3,
    Sphere = 4,
    Perturbation = 5,
    Signs = 6,
    PowerStart = 7,
    Probe = 8,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for `(tag, i, j)`.
pub fn stream_id(tag: Stream, i: u64, j: u64) -> u64 {
    splitmix(splitmix(splitmix(tag as u64) ^ i) ^ j.rotate_left(32))
}

/// Independent generator for `(seed, tag, i, j)`.
pub fn stream(seed: u64, tag: Stream, i: u64, j: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(tag, i, j));
    rng
}

/// Derive a child seed, used when one experiment seed drives several generators.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    splitmix(seed ^ splitmix(salt))
}

pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_gaussian<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

pub fn sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}
