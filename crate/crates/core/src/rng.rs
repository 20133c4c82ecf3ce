//! Seed derivation and the noise streams used by sensors.
//!
//! All bit-level choices here are part of the trace format:
//!
//! * `mix64` is the SplitMix64 finalizer.
//! * A run seed is `mix64(seed + 0x9E3779B97F4A7C15 · (run_id + 1))` (wrapping).
//! * A named stream seed is `mix64(seed ^ fnv1a64(name))`.
//! * A stream is ChaCha8 keyed with four successive SplitMix64 outputs
//!   starting from the stream seed, little-endian.
//! * Uniforms take the top 53 bits of `next_u64`, giving values in [0, 1).
//! * Gaussians use the Marsaglia polar method on two uniforms mapped to
//!   (-1, 1); the second variate of each accepted pair is discarded, so each
//!   normal consumes an even number of `u64` draws.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::geom::fm;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for run `run_id` of a sweep.
pub fn derive_run_seed(seed: u64, run_id: u64) -> u64 {
    mix64(seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(run_id.wrapping_add(1))))
}

pub fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn stream_seed(seed: u64, name: &str) -> u64 {
    mix64(seed ^ fnv1a64(name))
}

/// A deterministic random stream owned by one sensor (or test).
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn from_seed(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        NoiseStream {
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// The stream for `name` within a run seeded with `run_seed`.
    pub fn named(run_seed: u64, name: &str) -> Self {
        NoiseStream::from_seed(stream_seed(run_seed, name))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * fm::ln(s) / s).sqrt();
            }
        }
    }

    /// `sigma · N(0,1)`. Always consumes a variate, even for `sigma == 0`,
    /// so that noise settings never shift the rest of the stream.
    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        sigma * self.standard_normal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_vectors() {
        // First outputs of the reference SplitMix64 generator seeded with 0.
        assert_eq!(mix64(GOLDEN_GAMMA), 0xE220_A839_7B1D_CDAF);
        assert_eq!(mix64(GOLDEN_GAMMA.wrapping_mul(2)), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(mix64(GOLDEN_GAMMA.wrapping_mul(3)), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64("a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn run_seed_is_stable_and_distinct() {
        assert_eq!(derive_run_seed(0, 0), mix64(GOLDEN_GAMMA));
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_run_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn streams_are_reproducible_and_independent() {
        let mut a = NoiseStream::named(7, "lidar1");
        let mut b = NoiseStream::named(7, "lidar1");
        let mut c = NoiseStream::named(7, "lidar2");
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn gaussian_matches_polar_method_on_raw_draws() {
        let mut raw = NoiseStream::from_seed(1);
        let expected = loop {
            let u = 2.0 * ((raw.next_u64() >> 11) as f64 / 9007199254740992.0) - 1.0;
            let v = 2.0 * ((raw.next_u64() >> 11) as f64 / 9007199254740992.0) - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                break u * (-2.0 * libm::log(s) / s).sqrt();
            }
        };
        let mut s = NoiseStream::from_seed(1);
        assert_eq!(s.standard_normal(), expected);
    }

    #[test]
    fn gaussian_test_vector_is_frozen() {
        // Published test vector for seed 1; any change to the algorithm shows up here.
        let mut s = NoiseStream::from_seed(1);
        let bits: Vec<u64> = (0..3).map(|_| s.standard_normal().to_bits()).collect();
        assert_eq!(bits, [0x3fe75b0e1be348d9, 0xbfbfe948685e8851, 0xbfad6dd163b5f61f]);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = NoiseStream::from_seed(3);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
