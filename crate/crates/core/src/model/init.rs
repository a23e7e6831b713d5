use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Matrix;
use crate::algebra::{geometric_product_bitmask, Multivector, Signature};
use crate::{Error, Result};

/// Algebra dimension of `Cl(4,1)`.
const D: usize = 32;

/// `fan_in × 32` weights drawn from `N(0, 2 / (fan_in · 32))`.
pub fn versor_init(fan_in: usize, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    versor_init_matrix(fan_in, D, fan_in, &mut rng)
}

/// `rows × cols` weights with the Versor variance for the given fan-in.
pub fn versor_init_matrix(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    if fan_in == 0 {
        return Err(Error::InvalidArgument("fan_in must be at least 1".into()));
    }
    let std = (2.0 / (fan_in as f64 * D as f64)).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Empirical variance of the components of `W x` when `x` has unit-variance
/// coefficients and `W` has coefficient variance `weight_var`, estimated
/// from `samples` random pairs in `Cl(4,1)`.
pub fn variance_propagation(samples: usize, weight_var: f64, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let sig = Signature::cl41();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let w_dist = Normal::new(0.0, weight_var.sqrt())
        .map_err(|e| Error::InvalidArgument(format!("weight variance: {e}")))?;
    let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0usize);
    for _ in 0..samples {
        let x = Multivector::from_coeffs(sig, (0..D).map(|_| unit.sample(&mut rng)).collect())?;
        let w = Multivector::from_coeffs(sig, (0..D).map(|_| w_dist.sample(&mut rng)).collect())?;
        for &y in geometric_product_bitmask(&w, &x)?.coeffs() {
            sum += y;
            sum_sq += y * y;
            count += 1;
        }
    }
    let mean = sum / count as f64;
    Ok(sum_sq / count as f64 - mean * mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(m: &Matrix) -> f64 {
        let n = m.data().len() as f64;
        let mean = m.data().iter().sum::<f64>() / n;
        m.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn init_variance_matches_target() {
        // fan_in = 4 → 2 / 128
        let m = versor_init(4, 11).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 32));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let big = versor_init_matrix(100, 32, 4, &mut rng).unwrap();
        let v = variance(&big);
        assert!((v / 0.015625 - 1.0).abs() < 0.15, "{v}");
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(versor_init(7, 5).unwrap(), versor_init(7, 5).unwrap());
        assert_ne!(versor_init(7, 5).unwrap(), versor_init(7, 6).unwrap());
    }

    #[test]
    fn zero_fan_in_is_rejected() {
        assert!(matches!(versor_init(0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn geometric_product_preserves_variance_at_one_over_d() {
        let v = variance_propagation(2_000, 1.0 / 32.0, 9).unwrap();
        assert!((v - 1.0).abs() < 0.15, "{v}");
    }
}
