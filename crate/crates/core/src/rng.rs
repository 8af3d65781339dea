//! Portable seeded randomness.
//!
//! The bit source is ChaCha8 (`rand_chacha`), keyed through
//! `SeedableRng::seed_from_u64`; both are value-stable across platforms.
//! Uniform doubles take the top 53 bits of a `u64`. Normal deviates come from
//! the Box–Muller transform evaluated with `libm`, so the transcendental calls
//! do not depend on the host C library.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Maps a uniform pair `(u1, u2)` with `u1 ∈ (0, 1]` to two independent
/// standard normal deviates.
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * libm::cos(theta), r * libm::sin(theta))
}

/// SplitMix64 finaliser, used to derive independent stream seeds from labels.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator with a Gaussian adapter. Single consumer: give each
/// concurrent user its own instance (see [`SeededRng::substream`]).
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh generator seeded with `seed ⊕ index` (per-channel noise streams).
    pub fn substream(&self, index: u64) -> Self {
        Self::new(self.seed ^ index)
    }

    /// Fresh generator for a named purpose (epochs, evaluation, augmentation).
    pub fn derive(&self, label: u64) -> Self {
        Self::new(mix64(self.seed ^ mix64(label)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    /// Uniform integer in `0..n` (Lemire's widening multiply with rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_uniform() < p
    }

    /// Standard normal deviate; consumes two uniforms per pair of outputs.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        let (z0, z1) = box_muller(u1, u2);
        self.spare = Some(z1);
        z0
    }

    pub fn gaussian_vec<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| T::of(self.next_gaussian())).collect()
    }
}

/// `c×h×w` tensor of i.i.d. standard normal entries drawn in row-major order.
pub fn gaussian_noise<T: Scalar>(rng: &mut SeededRng, c: usize, h: usize, w: usize) -> Tensor<T> {
    let data = rng.gaussian_vec(c * h * w);
    Tensor::new(c, h, w, data).expect("length matches shape")
}
