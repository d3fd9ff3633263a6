//! Conversion of two-sided Gaussian chance constraints to standard-deviation bounds.

use statrs::function::erf::erf_inv;

use crate::error::{Error, Result};

/// Largest standard deviation for which a zero-mean Gaussian leaves
/// `[-limit, limit]` with probability at most `p`: `limit / (sqrt(2) erfinv(1 - p))`.
/// Returns infinity for `p = 1`.
pub fn chance_bound(limit: f64, p: f64) -> Result<f64> {
    if !(limit > 0.0) {
        return Err(Error::Argument(format!("constraint limit must be positive, got {limit}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Argument(format!(
            "violation probability must lie in (0, 1], got {p}"
        )));
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(limit / (std::f64::consts::SQRT_2 * erf_inv(1.0 - p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-sided Gaussian tail by bisection on a series-evaluated erf.
    fn sigmas_for(p: f64) -> f64 {
        fn erf(x: f64) -> f64 {
            // Maclaurin series, accurate for the |x| < 3 used here
            let mut term = x;
            let mut sum = x;
            for n in 1..200 {
                term *= -x * x / n as f64;
                sum += term / (2 * n + 1) as f64;
            }
            2.0 / std::f64::consts::PI.sqrt() * sum
        }
        let (mut lo, mut hi) = (0.0, 6.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - erf(mid / std::f64::consts::SQRT_2) > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn three_sigma_case() {
        let b = chance_bound(2000.0, 0.0027).unwrap();
        assert!((b - 2000.0 / sigmas_for(0.0027)).abs() < 1e-8 * b);
        assert!((b - 666.7).abs() < 0.5);
    }

    #[test]
    fn one_sigma_case() {
        let b = chance_bound(0.45, 0.3173).unwrap();
        assert!((b - 0.45 / sigmas_for(0.3173)).abs() < 1e-10);
        assert!((b - 0.45).abs() < 1e-4);
    }

    #[test]
    fn disabled_and_invalid() {
        assert_eq!(chance_bound(1.0, 1.0).unwrap(), f64::INFINITY);
        assert!(chance_bound(1.0, 0.0).is_err());
        assert!(chance_bound(1.0, -0.1).is_err());
        assert!(chance_bound(0.0, 0.5).is_err());
    }
}
