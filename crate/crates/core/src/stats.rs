//! Interval estimators shared by the Monte Carlo routines.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `hits` successes out of `n` trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub hits: u64,
    pub n: u64,
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn wilson(hits: u64, n: u64, z: f64) -> Proportion {
    if n == 0 {
        return Proportion { hits, n, p_hat: f64::NAN, lo: 0.0, hi: 1.0 };
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Proportion {
        hits,
        n,
        p_hat: p,
        lo: if hits == 0 { 0.0 } else { (centre - half).max(0.0) },
        hi: if hits == n { 1.0 } else { (centre + half).min(1.0) },
    }
}

/// Mean with a 95% half-width from non-overlapping batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMean {
    pub mean: f64,
    pub half_width: f64,
    pub batches: usize,
}

pub fn batch_means(batch_values: &[f64]) -> BatchMean {
    let b = batch_values.len();
    let mean = batch_values.iter().sum::<f64>() / b as f64;
    if b < 2 {
        return BatchMean { mean, half_width: f64::INFINITY, batches: b };
    }
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    let t = student_t_quantile(0.975, (b - 1) as f64);
    BatchMean { mean, half_width: t * (var / b as f64).sqrt(), batches: b }
}

pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(p)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// Sample mean and standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wilson_reference_values() {
        // 10 of 100 at z = 1.96: (0.05523, 0.17437)
        let w = wilson(10, 100, Z95);
        assert_relative_eq!(w.lo, 0.055_229, epsilon = 1e-5);
        assert_relative_eq!(w.hi, 0.174_37, epsilon = 1e-4);
        let zero = wilson(0, 50, Z95);
        assert_eq!(zero.lo, 0.0);
        assert_relative_eq!(zero.hi, Z95 * Z95 / (50.0 + Z95 * Z95), epsilon = 1e-12);
    }

    #[test]
    fn t_quantile_matches_table() {
        assert_relative_eq!(student_t_quantile(0.975, 19.0), 2.093_024, epsilon = 1e-5);
        assert_relative_eq!(normal_quantile(0.975), Z95, epsilon = 1e-9);
    }

    #[test]
    fn batch_means_constant() {
        let b = batch_means(&[2.0; 20]);
        assert_eq!(b.mean, 2.0);
        assert_eq!(b.half_width, 0.0);
    }

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_relative_eq!(ols_slope(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), 2.0);
    }
}
