//! Seed derivation and fast null samplers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a list of tags into an independent stream seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

pub fn tag(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn rng_for(base: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, tags))
}

/// Geometric on {1, 2, ...} with success probability 1/2.
#[inline]
pub fn geometric_half<R: RngCore + ?Sized>(rng: &mut R) -> u32 {
    let mut extra = 0;
    loop {
        let u = rng.next_u64();
        if u != 0 {
            return extra + 1 + u.trailing_zeros();
        }
        extra += 64;
    }
}

/// A draw from the subcrossing null law, P(Z = 2i) = 2^-i.
#[inline]
pub fn null_z<R: RngCore + ?Sized>(rng: &mut R) -> u32 {
    2 * geometric_half(rng)
}

/// Binomial(m, 1/2) as the popcount of m random bits.
pub fn binomial_half<R: RngCore + ?Sized>(rng: &mut R, m: usize) -> usize {
    let mut total = 0usize;
    let mut left = m;
    while left >= 64 {
        total += rng.next_u64().count_ones() as usize;
        left -= 64;
    }
    if left > 0 {
        total += (rng.next_u64() & ((1u64 << left) - 1)).count_ones() as usize;
    }
    total
}

/// Counts of Y = 1, 2, ... in n geometric draws, generated level by level.
pub fn geometric_counts<R: RngCore + ?Sized>(rng: &mut R, n: usize, out: &mut Vec<usize>) {
    out.clear();
    let mut left = n;
    while left > 0 {
        let stay = binomial_half(rng, left);
        out.push(left - stay);
        left = stay;
    }
}

/// n fair bits.
pub fn bernoulli_bits<R: RngCore + ?Sized>(rng: &mut R, n: usize, out: &mut Vec<u8>) {
    out.clear();
    let mut word = 0u64;
    for i in 0..n {
        if i % 64 == 0 {
            word = rng.next_u64();
        }
        out.push((word & 1) as u8);
        word >>= 1;
    }
}
