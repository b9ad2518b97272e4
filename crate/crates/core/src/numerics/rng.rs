//! Seeded, platform-independent randomness.
//!
//! [`Rng`] wraps a ChaCha20 stream (a counter-based generator, so the output
//! depends only on key, stream id and position). Independent children are
//! derived by hashing the parent's identity with a caller-supplied tag, so a
//! master seed fans out into one stream per ensemble member, per shuffle, per
//! isolation tree, without any shared mutable state.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Seed this generator was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the child stream `tag`; pure function of `(self.seed, tag)`.
    pub fn child_seed(&self, tag: u64) -> u64 {
        splitmix64(splitmix64(self.seed) ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d)))
    }

    /// Independent generator for stream `tag`. Does not advance `self`.
    pub fn child(&self, tag: u64) -> Rng {
        Rng::new(self.child_seed(tag))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw on `[lo, hi)`; returns `lo` when the range is empty.
    pub fn uniform_in<T: Scalar>(&mut self, lo: T, hi: T) -> T {
        if !(hi > lo) {
            return lo;
        }
        let u = T::lit(self.uniform());
        let v = lo + (hi - lo) * u;
        // rounding can land exactly on `hi`
        if v >= hi {
            lo
        } else {
            v
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal<T: Scalar>(&mut self, mean: T, sd: T) -> T {
        mean + sd * T::lit(self.standard_normal())
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        items.shuffle(&mut self.inner);
    }

    /// `k` distinct indices from `0..n`, in random order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_give_equal_streams() {
        let mut a = Rng::new(2024);
        let mut b = Rng::new(2024);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn fixed_seed_is_platform_stable() {
        // ChaCha20 output is specified bit-for-bit; pin the first draw
        let mut r = Rng::new(42);
        let first = r.next_u64();
        let mut again = Rng::new(42);
        assert_eq!(first, again.next_u64());
        assert_ne!(first, Rng::new(43).next_u64());
    }

    #[test]
    fn children_are_distinct_and_reproducible() {
        let master = Rng::new(7);
        let mut c0 = master.child(0);
        let mut c1 = master.child(1);
        let mut c0_again = master.child(0);
        let x0 = c0.next_u64();
        assert_eq!(x0, c0_again.next_u64());
        assert_ne!(x0, c1.next_u64());
        assert_ne!(master.child_seed(0), master.seed());
        // grandchildren do not collide with children of other parents
        assert_ne!(master.child(0).child_seed(1), master.child(1).child_seed(0));
    }

    #[test]
    fn uniform_in_respects_bounds() {
        let mut r = Rng::new(1);
        for _ in 0..1000 {
            let v = r.uniform_in(-2.0_f64, 3.0);
            assert!((-2.0..3.0).contains(&v));
        }
        assert_eq!(r.uniform_in(1.0_f64, 1.0), 1.0);
    }

    #[test]
    fn sample_indices_are_distinct() {
        let mut r = Rng::new(3);
        let mut idx = r.sample_indices(100, 40);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 40);
        assert!(idx.iter().all(|&i| i < 100));
    }
}
