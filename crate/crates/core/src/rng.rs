//! Seeded random streams.
//!
//! Every random quantity in the crate comes from a stream addressed by
//! `(seed, domain, a, b)`. A stream depends only on its address, so results do
//! not depend on evaluation order or on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream domains. Keeping them distinct avoids accidental reuse of the same
/// numbers for unrelated purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    EmaxDraws = 1,
    Simulation = 2,
    LikelihoodDraws = 3,
    Bootstrap = 4,
    Ellipsoid = 5,
    Test = 99,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for one stream address.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain as u64)));
    let id = splitmix64(splitmix64(a).wrapping_add(b.rotate_left(32)) ^ (domain as u64));
    rng.set_stream(id);
    rng
}

#[inline]
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform on the open interval (0, 1).
#[inline]
pub fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Index drawn from a discrete distribution given by `probs` (assumed to sum to one).
pub fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` slightly below one.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
