//! Deterministic randomness.
//!
//! One master seed expands into independent streams through a counter-based
//! split (SplitMix64 over the domain words), so per-node draws never depend
//! on the order nodes are visited within a step. Equal `(seed, domain)`
//! always yields a bit-identical stream on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

/// Addresses an independent stream under one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamDomain {
    /// Target motion and anything else owned by the environment.
    Environment { run: u64 },
    /// Node position sampling for one run.
    Deployment { run: u64 },
    /// All decisions and sensor noise of a single node.
    Node { run: u64, node: u32 },
}

impl StreamDomain {
    fn words(self) -> (u64, u64, u64) {
        match self {
            StreamDomain::Environment { run } => (1, run, 0),
            StreamDomain::Deployment { run } => (2, run, 0),
            StreamDomain::Node { run, node } => (3, run, node as u64 + 1),
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A seedable stream of doubles, Gaussians, Poisson counts and indices.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, domain: StreamDomain) -> Self {
        let (kind, a, b) = domain.words();
        let mut state = master_seed ^ 0x243F6A8885A308D3;
        let mut seed = [0u8; 32];
        // Fold the domain words into the splitmix state, then expand.
        state = state.wrapping_add(splitmix64(&mut { kind.wrapping_mul(0x9E3779B97F4A7C15) }));
        state ^= kind.wrapping_mul(0xD1342543DE82EF95).wrapping_add(1);
        state ^= a.wrapping_mul(0xAF251AF3B0F025B5).wrapping_add(2);
        state ^= b.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(3);
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn gauss(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// `N(mean, std^2)` draw.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.gauss()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }

    /// Poisson count with the given mean (zero mean yields zero).
    pub fn poisson(&mut self, mean: f64) -> u32 {
        if mean <= 0.0 {
            return 0;
        }
        let dist = Poisson::new(mean).expect("positive finite poisson mean");
        dist.sample(&mut self.inner) as u32
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index over empty range");
        self.inner.random_range(0..n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seed_equal_sequence() {
        let mut a = RngStream::new(42, StreamDomain::Node { run: 3, node: 7 });
        let mut b = RngStream::new(42, StreamDomain::Node { run: 3, node: 7 });
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn domains_are_independent() {
        let mut a = RngStream::new(42, StreamDomain::Node { run: 3, node: 7 });
        let mut b = RngStream::new(42, StreamDomain::Node { run: 3, node: 8 });
        let same = (0..32).filter(|_| a.uniform() == b.uniform()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn poisson_mean_tracks_parameter() {
        let mut rng = RngStream::new(1, StreamDomain::Environment { run: 0 });
        let n = 100_000;
        let mean = 0.025;
        let total: u64 = (0..n).map(|_| rng.poisson(mean) as u64).sum();
        let empirical = total as f64 / n as f64;
        // 3-sigma Poisson bound on the sample mean
        let sigma = (mean / n as f64).sqrt();
        assert!((empirical - mean).abs() < 3.0 * sigma + 1e-4);
    }
}
