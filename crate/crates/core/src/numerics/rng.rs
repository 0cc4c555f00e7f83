//! Seeded randomness with named substreams.
//!
//! Every pipeline stage draws from its own substream, derived from the parent
//! seed and a stage name. Adding a stage therefore never shifts the random
//! numbers another stage sees.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stage-scoped deterministic random stream.
///
/// Substreams are keyed by `(seed, name)` only, not by how much of the parent
/// stream has been consumed.
#[derive(Debug, Clone)]
pub struct StreamRng {
    seed: u64,
    inner: ChaCha8Rng,
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// SplitMix64 finalizer; decorrelates structured seed inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        StreamRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The seed this stream was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent child stream for `name`.
    pub fn substream(&self, name: &str) -> StreamRng {
        StreamRng::new(self.derive(name))
    }

    /// The seed `substream(name)` would use, without creating the stream.
    pub fn derive(&self, name: &str) -> u64 {
        mix(self.seed ^ fnv1a(name.as_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random()
    }

    /// Uniform float in `[lo, hi)`.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.random_range(lo..hi)
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        slice.shuffle(&mut self.inner);
    }

    /// `count` distinct indices drawn from `[0, n)` without replacement,
    /// in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(count);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = StreamRng::new(42);
        let mut b = StreamRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substream_depends_on_seed_not_position() {
        let mut a = StreamRng::new(7);
        let b = StreamRng::new(7);
        // Consuming from `a` must not change what its substreams produce.
        for _ in 0..10 {
            a.next_u64();
        }
        let mut sa = a.substream("stage");
        let mut sb = b.substream("stage");
        for _ in 0..20 {
            assert_eq!(sa.next_u64(), sb.next_u64());
        }
    }

    #[test]
    fn substreams_differ_by_name() {
        let root = StreamRng::new(7);
        let mut x = root.substream("alpha");
        let mut y = root.substream("beta");
        let same = (0..16).filter(|_| x.next_u64() == y.next_u64()).count();
        assert!(same < 2);
    }

    #[test]
    fn sample_without_replacement_is_a_permutation_prefix() {
        let mut rng = StreamRng::new(3);
        let mut got = rng.sample_without_replacement(10, 10);
        got.sort_unstable();
        assert_eq!(got, (0..10).collect::<Vec<_>>());
        let partial = StreamRng::new(3).sample_without_replacement(10, 4);
        assert_eq!(partial.len(), 4);
        let mut dedup = partial.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 4);
    }
}
