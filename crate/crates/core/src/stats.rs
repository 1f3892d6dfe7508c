//! Small Monte Carlo statistics helpers: means, jackknife errors of p-th
//! moment roots, and delta-method propagation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Estimate::new(mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Estimate::new(mean, (var / n as f64).sqrt())
}

/// `{mean |x|^p}^{1/p}` with a leave-one-out jackknife standard error.
pub fn moment_root(xs: &[f64], p: f64) -> Estimate {
    let powers: Vec<f64> = xs.iter().map(|x| x.abs().powf(p)).collect();
    mean_power_root(&powers, p)
}

/// `{mean a}^{1/p}` for precomputed nonnegative `a`, with jackknife error.
pub fn mean_power_root(a: &[f64], p: f64) -> Estimate {
    let n = a.len();
    let total: f64 = a.iter().sum();
    let root = |s: f64, k: usize| (s / k as f64).max(0.0).powf(1.0 / p);
    let value = root(total, n);
    if n < 2 {
        return Estimate::new(value, f64::INFINITY);
    }
    let loo: Vec<f64> = a.iter().map(|&ai| root(total - ai, n - 1)).collect();
    Estimate::new(value, jackknife_se(&loo))
}

/// Jackknife standard error from leave-one-out replicates.
pub fn jackknife_se(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|t| (t - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Standard error of `m^{1/p}` given the standard error of `m`.
pub fn root_se(mean: Estimate, p: f64) -> Estimate {
    let value = mean.value.max(0.0).powf(1.0 / p);
    if mean.value <= 0.0 {
        // The root is not differentiable at 0; report the scale of the noise.
        return Estimate::new(value, mean.se.max(0.0).powf(1.0 / p));
    }
    Estimate::new(value, value / (p * mean.value) * mean.se)
}
