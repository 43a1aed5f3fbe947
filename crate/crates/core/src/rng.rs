//! Splittable, counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream identified by `(seed, stream)`.
//! Child streams are derived by hashing the parent stream id with a label,
//! so the sample sequence of any stream depends only on how it was reached,
//! never on how many draws other streams made.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

/// Serializable position of an [`Rng`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// Independent child stream. Does not advance `self`.
    pub fn split(&self, label: u64) -> Self {
        let stream = splitmix(self.stream ^ splitmix(label.wrapping_add(1)));
        Self::with_stream(self.seed, stream)
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut r = Self::with_stream(state.seed, state.stream);
        r.inner.set_word_pos(state.word_pos);
        r
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    pub fn uniform_vec<S: Scalar>(&mut self, n: usize, lo: f64, hi: f64) -> Vec<S> {
        (0..n).map(|_| S::lit(self.uniform_range(lo, hi))).collect()
    }

    pub fn normal_vec<S: Scalar>(&mut self, n: usize) -> Vec<S> {
        (0..n).map(|_| S::lit(self.normal())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn split_is_independent_of_parent_draws() {
        let a = Rng::new(3);
        let mut b = Rng::new(3);
        b.next_u64();
        b.next_u64();
        let mut ca = a.split(5);
        let mut cb = b.split(5);
        assert_eq!(ca.next_u64(), cb.next_u64());
        let mut other = a.split(6);
        assert_ne!(a.split(5).next_u64(), other.next_u64());
    }

    #[test]
    fn state_roundtrip_resumes_stream() {
        let mut a = Rng::new(11).split(2);
        for _ in 0..37 {
            a.next_u64();
        }
        let mut b = Rng::from_state(a.state());
        for _ in 0..20 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }
}
