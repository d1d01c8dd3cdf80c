//! Small summary statistics used by the evaluation tables.

use serde::{Deserialize, Serialize};

/// Normal quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Pairwise summation, so the result does not depend on how a batch was
/// split across threads.
pub fn sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            sum(a) + sum(b)
        }
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(sum(xs) / xs.len() as f64)
    }
}

/// Sample standard deviation (n - 1 in the denominator).
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    let sq: alloc::vec::Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    Some(libm::sqrt(sum(&sq) / (xs.len() - 1) as f64))
}

/// Mean with the half-width of its normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

pub fn mean_ci(xs: &[f64]) -> Option<MeanCi> {
    let mean = mean(xs)?;
    let sd = std_dev(xs)?;
    Some(MeanCi {
        mean,
        ci95: Z95 * sd / libm::sqrt(xs.len() as f64),
        n: xs.len(),
    })
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson(successes: usize, n: usize) -> Option<(f64, f64)> {
    if n == 0 {
        return None;
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * libm::sqrt(p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)) / denom;
    Some(((centre - half).max(0.0), (centre + half).min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basics() {
        assert_eq!(mean(&[]), None);
        assert_eq!(mean(&[1.0, 2.0, 3.0]), Some(2.0));
        assert!((std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap() - 2.138_089_935_299_395).abs() < 1e-12);
        let xs: alloc::vec::Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        assert!((sum(&xs) - 49_950.0).abs() < 1e-9);
    }

    #[test]
    fn wilson_interval() {
        // reference values from the closed form, z = 1.959964
        let (lo, hi) = wilson(50, 100).unwrap();
        assert!((lo - 0.403_831_7).abs() < 1e-6, "{lo}");
        assert!((hi - 0.596_168_3).abs() < 1e-6, "{hi}");
        let (lo, hi) = wilson(0, 10).unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.35);
        assert_eq!(wilson(0, 0), None);
    }
}
