//! Seeded random streams.
//!
//! Every stream is a ChaCha20 generator whose 256-bit key is derived from a
//! `(seed, tag)` pair:
//!
//! 1. `h = fnv1a64(tag)`
//! 2. `s = seed ^ h`, then four successive SplitMix64 outputs of `s` fill the
//!    key as little-endian words.
//!
//! Draw conventions:
//!
//! * uniform on `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! * standard normal: Box–Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, one
//!   normal per pair of uniforms, no caching
//! * bounded integer in `0..n`: rejection on `next_u64` below the largest
//!   multiple of `n`, then `% n`
//!
//! Replication `r` of a run with master seed `s` uses seed `split(s, r)`.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// One SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of child `index` from `seed`.
pub fn split(seed: u64, index: u64) -> u64 {
    let mut s = seed ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93);
    splitmix64(&mut s)
}

/// A random stream keyed by `(seed, tag)`.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha20Rng,
}

impl Stream {
    pub fn new(seed: u64, tag: &str) -> Self {
        let mut s = seed ^ fnv1a64(tag.as_bytes());
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        Stream {
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(1.0 - u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher–Yates shuffle, swapping position `i` with `below(i + 1)` for
    /// `i` from the end down to 1.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn splitmix_reference_value() {
        let mut s = 1234567u64;
        assert_eq!(splitmix64(&mut s), 6457827717110365317);
    }

    #[test]
    fn streams_differ_by_tag_and_repeat_by_key() {
        let a: [u64; 4] = core::array::from_fn(|_| 0);
        let mut s1 = Stream::new(7, "x");
        let mut s2 = Stream::new(7, "x");
        let mut s3 = Stream::new(7, "y");
        let v1: [u64; 4] = a.map(|_| s1.next_u64());
        let v2: [u64; 4] = a.map(|_| s2.next_u64());
        let v3: [u64; 4] = a.map(|_| s3.next_u64());
        assert_eq!(v1, v2);
        assert_ne!(v1, v3);
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(3, "normal");
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 0.01, "{m1}");
        assert!((m2 - 1.0).abs() < 0.01, "{m2}");
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut s = Stream::new(1, "perm");
        let mut v: [usize; 50] = core::array::from_fn(|i| i);
        s.shuffle(&mut v);
        let mut sorted = v;
        sorted.sort_unstable();
        assert_eq!(sorted, core::array::from_fn::<usize, 50, _>(|i| i));
        assert_ne!(v, sorted);
    }
}
