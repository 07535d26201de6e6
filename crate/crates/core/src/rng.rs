//! Reproducible random streams.
//!
//! [`StreamRng`] is ChaCha20 in counter mode keyed by a 64-bit seed. A stream
//! is addressed by `(seed, stream id, word position)`; [`StreamRng::fork`]
//! derives a child stream id from the parent id and a tag with SplitMix64, so
//! the child depends only on where it is forked from, never on how much of
//! the parent has been consumed. Masks for (step, image, layer, head) are
//! drawn from nested forks and can be regenerated independently.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Clone, Debug)]
pub struct StreamRng {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, 0)
    }

    fn at(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream addressed by `tag`. Does not advance `self`.
    pub fn fork(&self, tag: u64) -> Self {
        let stream = splitmix64(self.stream ^ splitmix64(tag.wrapping_add(1)));
        Self::at(self.seed, stream)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n` (`n > 0`), by rejection.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = StreamRng::new(42);
        let mut b = StreamRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn fork_ignores_parent_consumption() {
        let a = StreamRng::new(7);
        let mut b = StreamRng::new(7);
        for _ in 0..10 {
            b.next_u64();
        }
        let mut fa = a.fork(3);
        let mut fb = b.fork(3);
        assert_eq!(fa.next_u64(), fb.next_u64());
        let mut other = a.fork(4);
        assert_ne!(a.fork(3).next_u64(), other.next_u64());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = StreamRng::new(1);
        for _ in 0..1000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
        for _ in 0..1000 {
            assert!(r.below(7) < 7);
        }
    }
}
