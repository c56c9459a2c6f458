//! Streaming moments and the a-posteriori error statistic.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Welford accumulator for mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.count as f64 * w;
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n - 1 denominator); zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std_dev() / (self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Two-sided standard normal critical value `z_{alpha/2}`.
pub fn z_critical(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - alpha / 2.0))
}

/// Relative half-width in percent: `z_{alpha/2} * s/sqrt(n) * 100/|mean|`.
pub fn relative_error_pct(samples: &[f64], alpha: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::domain("relative error needs at least two samples"));
    }
    let stats: RunningStats = samples.iter().copied().collect();
    relative_error_from(&stats, alpha)
}

pub fn relative_error_from(stats: &RunningStats, alpha: f64) -> Result<f64> {
    let z = z_critical(alpha)?;
    let half_width = z * stats.std_error();
    if stats.mean() == 0.0 {
        if half_width == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::domain(format!(
            "zero mean: relative error undefined (absolute half-width {half_width})"
        )));
    }
    Ok(half_width * 100.0 / stats.mean().abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Standard normal CDF by composite Simpson on the density, independent of statrs.
    fn phi_by_quadrature(z: f64) -> f64 {
        let steps = 20_000;
        let h = z / steps as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = f(0.0) + f(z);
        for k in 1..steps {
            acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn z_matches_quadrature_oracle() {
        // bisection on the quadrature CDF
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if phi_by_quadrature(mid) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = z_critical(0.05).unwrap();
        assert_abs_diff_eq!(z, 0.5 * (lo + hi), epsilon = 1e-7);
        assert_abs_diff_eq!(z, 1.959964, epsilon = 1e-5);
        assert!(z_critical(0.0).is_err());
        assert!(z_critical(1.0).is_err());
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 37) % 101) as f64 * 0.3 - 7.0)
            .collect();
        let s: RunningStats = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert_abs_diff_eq!(s.mean(), mean, epsilon = 1e-12);
        assert_abs_diff_eq!(s.variance(), var, epsilon = 1e-9);

        let mut left: RunningStats = xs[..313].iter().copied().collect();
        let right: RunningStats = xs[313..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(left.count(), 1000);
        assert_abs_diff_eq!(left.mean(), mean, epsilon = 1e-12);
        assert_abs_diff_eq!(left.variance(), var, epsilon = 1e-9);
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error_pct(&[3.0; 10], 0.05).unwrap(), 0.0);
        assert!(relative_error_pct(&[1.0], 0.05).is_err());
        assert!(relative_error_pct(&[-1.0, 1.0], 0.05).is_err());

        // equally spaced grid with the variance of U(0,10)
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|i| 10.0 * (i as f64 + 0.5) / n as f64).collect();
        let expected = 1.959964 * (100.0f64 / 12.0).sqrt() / (n as f64).sqrt() * 100.0 / 5.0;
        let got = relative_error_pct(&xs, 0.05).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-4);
        assert_abs_diff_eq!(got, 1.13, epsilon = 0.01);
    }
}
