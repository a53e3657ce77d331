//! Small numeric helpers shared by the estimators.

use statrs::distribution::{ContinuousCDF, Normal};

/// Running mean / sum of squared deviations (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance with denominator `n - 1`; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }
}

impl FromIterator<f64> for Running {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut r = Running::new();
        for x in iter {
            r.push(x);
        }
        r
    }
}

/// Two-pass mean and sample variance (denominator `n - 1`, zero when `n < 2`).
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Two-sided standard normal quantile for the given confidence level.
pub fn two_sided_z(confidence: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.5 + confidence / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_values() {
        assert!((two_sided_z(0.90) - 1.644_853_6).abs() < 1e-6);
        assert!((two_sided_z(0.95) - 1.959_964).abs() < 1e-6);
    }

    #[test]
    fn running_matches_two_pass() {
        let xs = [0.3, 1.7, -2.0, 4.25, 0.0, 0.0, 9.5];
        let r: Running = xs.iter().copied().collect();
        let (m, v) = mean_and_variance(&xs);
        assert!((r.mean() - m).abs() < 1e-12);
        assert!((r.variance() - v).abs() < 1e-12);
    }

    #[test]
    fn single_sample_variance_is_zero() {
        assert_eq!(mean_and_variance(&[3.0]), (3.0, 0.0));
    }
}
