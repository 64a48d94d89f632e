//! Seeded, splittable randomness.
//!
//! Every random draw in the crate comes from an [`RngStream`]: a `(seed,
//! stream)` pair mapped onto a ChaCha keystream. ChaCha stream ids select
//! disjoint 2^64-block sequences under the same key, so per-trial streams
//! never overlap and results do not depend on how trials are scheduled.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

pub type StreamRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derives a named sub-stream, e.g. one per trial or per purpose
    /// (channel, noise, payload) within a trial.
    pub fn child(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0xA5A5_5A5A))),
        }
    }

    /// Instantiates the generator for this stream, positioned at its start.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Draws a standard circularly-symmetric complex Gaussian with unit variance.
pub fn standard_cgaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws from `CN(mean, var)`; each of the real and imaginary parts has
/// variance `var / 2`.
pub fn sample_cgaussian<R: Rng + ?Sized>(rng: &mut R, mean: Complex64, var: f64) -> Result<Complex64> {
    if !(var >= 0.0) {
        return invalid(format!("complex Gaussian variance must be >= 0, got {var}"));
    }
    if var == 0.0 {
        return Ok(mean);
    }
    Ok(mean + standard_cgaussian(rng) * var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_returns_mean() {
        let mut rng = RngStream::new(1, 0).rng();
        let m = Complex64::new(0.3, -2.0);
        assert_eq!(sample_cgaussian(&mut rng, m, 0.0).unwrap(), m);
    }

    #[test]
    fn negative_variance_rejected() {
        let mut rng = RngStream::new(1, 0).rng();
        assert!(sample_cgaussian(&mut rng, Complex64::new(0.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn sample_variance_matches() {
        let mut rng = RngStream::new(7, 3).rng();
        let n = 1_000_000;
        let mut acc = 0.0;
        let mut acc_re = 0.0;
        for _ in 0..n {
            let z = sample_cgaussian(&mut rng, Complex64::new(0.0, 0.0), 2.0).unwrap();
            acc += z.norm_sqr();
            acc_re += z.re * z.re;
        }
        let v = acc / n as f64;
        assert!((v - 2.0).abs() < 0.02, "variance {v}");
        assert!((acc_re / n as f64 - 1.0).abs() < 0.01);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStream::new(42, 5);
        let a: Vec<u64> = (0..16).map({ let mut r = s.rng(); move |_| r.random() }).collect();
        let b: Vec<u64> = (0..16).map({ let mut r = s.rng(); move |_| r.random() }).collect();
        assert_eq!(a, b);
        let c: Vec<u64> = (0..16).map({ let mut r = RngStream::new(42, 6).rng(); move |_| r.random() }).collect();
        assert_ne!(a, c);
        assert_ne!(s.child(1), s.child(2));
        assert_eq!(s.child(1), s.child(1));
    }
}
