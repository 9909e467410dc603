//! Counter-based random streams and the handful of samplers the simulator needs.
//!
//! Every epoch draws from its own ChaCha stream keyed by `(seed, epoch)`, so the
//! draws of one epoch never depend on which worker ran it or in what order.

use core::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, Standard, StandardNormal};

use crate::linalg::CVector;

pub type StreamRng = ChaCha12Rng;

/// Independent stream for one epoch of the experiment seeded with `seed`.
pub fn epoch_stream(seed: u64, epoch: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    rng
}

/// Uniform in `[0, 1)`.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    Standard.sample(rng)
}

pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Circularly symmetric complex normal with unit variance.
pub fn complex_normal<R: RngCore + ?Sized>(rng: &mut R) -> Complex64 {
    let re = standard_normal(rng);
    let im = standard_normal(rng);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

pub fn complex_normal_vector<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| complex_normal(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = epoch_stream(7, 3).next_u64();
        let b = epoch_stream(7, 3).next_u64();
        let c = epoch_stream(7, 4).next_u64();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn complex_normal_has_unit_power() {
        let mut rng = epoch_stream(1, 0);
        let n = 20_000;
        let p: f64 = (0..n).map(|_| complex_normal(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.05, "{p}");
    }
}
