//! One-dimensional empirical statistics: moments, quantiles, W2 and KS.
//!
//! Quantiles use linear interpolation between order statistics (the
//! "type 7" convention): level p sits at position (N − 1)p of the sorted sample.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample sets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("level {0} outside [0, 1]")]
    InvalidLevel(f64),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, StatsError>;

fn require(samples: &[f64], needed: usize) -> Result<()> {
    if samples.len() < needed {
        return Err(StatsError::TooFewSamples {
            needed,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Neumaier-compensated sum, evaluated strictly left to right.
pub fn stable_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(samples: &[f64]) -> Result<f64> {
    require(samples, 1)?;
    Ok(stable_sum(samples.iter().copied()) / samples.len() as f64)
}

/// Unbiased sample variance (two-pass).
pub fn variance(samples: &[f64]) -> Result<f64> {
    require(samples, 2)?;
    let m = mean(samples)?;
    let ss = stable_sum(samples.iter().map(|x| (x - m) * (x - m)));
    Ok(ss / (samples.len() - 1) as f64)
}

/// Sample mean and its standard error s/√N.
pub fn mean_and_se(samples: &[f64]) -> Result<(f64, f64)> {
    let m = mean(samples)?;
    let v = variance(samples)?;
    Ok((m, (v / samples.len() as f64).sqrt()))
}

/// Standard error of the unbiased sample variance, from the fourth central
/// moment: Var(s²) ≈ (μ₄ − σ⁴ (N−3)/(N−1)) / N.
pub fn variance_se(samples: &[f64]) -> Result<f64> {
    require(samples, 4)?;
    let n = samples.len() as f64;
    let m = mean(samples)?;
    let m2 = stable_sum(samples.iter().map(|x| (x - m).powi(2))) / n;
    let m4 = stable_sum(samples.iter().map(|x| (x - m).powi(4))) / n;
    let var = (m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n;
    Ok(var.max(0.0).sqrt())
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(samples: &[f64], level: f64) -> Result<f64> {
    Ok(quantiles(samples, &[level])?[0])
}

/// Several quantiles with a single sort.
pub fn quantiles(samples: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    require(samples, 2)?;
    if let Some(&bad) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(StatsError::InvalidLevel(bad));
    }
    let s = sorted(samples);
    Ok(levels.iter().map(|&l| quantile_sorted(&s, l)).collect())
}

/// Wasserstein-2 distance between two equal-size 1-D empirical measures,
/// by pairing order statistics.
pub fn w2_1d(x: &[f64], y: &[f64]) -> Result<f64> {
    require(x, 2)?;
    require(y, 2)?;
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let (xs, ys) = (sorted(x), sorted(y));
    let ss = stable_sum(xs.iter().zip(&ys).map(|(a, b)| (a - b) * (a - b)));
    Ok((ss / x.len() as f64).sqrt())
}

/// Kolmogorov–Smirnov distance sup_t |F_N(t) − F(t)| against a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    require(samples, 2)?;
    let s = sorted(samples);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0_f64, |worst, (i, &x)| {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        worst.max(above).max(below)
    }))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Dvoretzky–Kiefer–Wolfowitz radius: P(KS > r) ≤ 1 − confidence.
pub fn dkw_radius(n: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * n as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use approx::assert_relative_eq;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn median_midpoint_convention() {
        assert_eq!(quantile(&[4.0, 2.0, 1.0, 3.0], 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&[1.0, 2.0], 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&[1.0, 2.0], 1.0).unwrap(), 2.0);
        assert!(quantile(&[1.0, 2.0], 1.5).is_err());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(mean(&[]).is_err());
        assert!(variance(&[1.0]).is_err());
        assert!(w2_1d(&[], &[]).is_err());
        assert!(ks_distance(&[], |x| x).is_err());
    }

    #[test]
    fn w2_of_identical_and_shifted() {
        let x = [0.3, -1.0, 2.0, 5.5];
        assert_eq!(w2_1d(&x, &x).unwrap(), 0.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + 1.5).collect();
        assert_relative_eq!(w2_1d(&x, &shifted).unwrap(), 1.5, epsilon = 1e-15);
        assert!(w2_1d(&x, &x[..3]).is_err());
    }

    #[test]
    fn variance_matches_definition() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(variance(&x).unwrap(), 5.0 / 3.0, epsilon = 1e-15);
        let (m, se) = mean_and_se(&x).unwrap();
        assert_eq!(m, 2.5);
        assert_relative_eq!(se, (5.0 / 12.0f64).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_draws_pass_ks_at_dkw_budget() {
        let mut s = Stream::new(2024, 0);
        let draws: Vec<f64> = (0..10_000).map(|_| s.normal()).collect();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let ks = ks_distance(&draws, |x| normal.cdf(x)).unwrap();
        let budget = dkw_radius(draws.len(), 0.999);
        assert!(budget <= 0.025);
        assert!(ks <= budget, "ks = {ks}");
    }

    #[test]
    fn ks_of_exact_grid_is_half_step() {
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let ks = ks_distance(&x, |t| t.clamp(0.0, 1.0)).unwrap();
        assert_relative_eq!(ks, 0.5 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(stable_sum(xs), 2.0);
    }
}
