//! Random sources used throughout the crate.
//!
//! Every stochastic routine takes a `&mut impl Draw` so that tests can swap in
//! a degenerate source such as [`Greedy`]. Any `rand::Rng` is a `Draw`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The crate-wide seeded generator.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream from a base seed and a stream tag.
pub fn substream(seed: u64, tag: u64) -> SeededRng {
    // splitmix64 finaliser over the pair
    let mut x = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    ChaCha8Rng::seed_from_u64(x)
}

pub trait Draw {
    /// Draw an index from an (approximately) normalised probability vector.
    fn categorical(&mut self, probs: &[f64]) -> usize;
    fn bernoulli(&mut self, p: f64) -> bool;
    fn uniform(&mut self) -> f64;
    fn standard_normal(&mut self) -> f64;
}

impl<R: Rng + ?Sized> Draw for R {
    fn categorical(&mut self, probs: &[f64]) -> usize {
        let total: f64 = probs.iter().sum();
        let mut u = self.random::<f64>() * total;
        let mut last_nonzero = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            last_nonzero = i;
            if u < p {
                return i;
            }
            u -= p;
        }
        last_nonzero
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        self.random::<f64>() < p
    }

    fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }

    fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

/// Degenerate source: categorical draws return the argmax (lowest id on
/// ties), Bernoulli draws succeed iff `p >= 0.5`, uniforms are 0.5 and
/// normals are 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct Greedy;

impl Draw for Greedy {
    fn categorical(&mut self, probs: &[f64]) -> usize {
        argmax(probs)
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        p >= 0.5
    }

    fn uniform(&mut self) -> f64 {
        0.5
    }

    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_takes_argmax_and_lowest_tie() {
        let mut g = Greedy;
        assert_eq!(g.categorical(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(g.categorical(&[0.4, 0.4, 0.2]), 0);
        assert!(g.bernoulli(1.0));
        assert!(!g.bernoulli(0.1));
    }

    #[test]
    fn categorical_never_returns_zero_mass() {
        let mut rng = seeded(3);
        for _ in 0..10_000 {
            let i = rng.categorical(&[0.0, 0.7, 0.0, 0.3]);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn substreams_differ() {
        let a: u64 = substream(1, 0).random();
        let b: u64 = substream(1, 1).random();
        assert_ne!(a, b);
        let c: u64 = substream(1, 0).random();
        assert_eq!(a, c);
    }
}
