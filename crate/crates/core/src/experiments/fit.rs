//! Log-log rate fits and the regime classifier for predicted exponents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::rng::{tag, StreamRng};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Absolute slope tolerance of summary verdicts.
pub const SLOPE_TOLERANCE: f64 = 0.1;
const CRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// 95% residual-bootstrap interval.
    pub slope_ci: (f64, f64),
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least squares of `log value` on `log N`, with a residual bootstrap for
/// the slope interval.
pub fn rate_fit(points: &[RatePoint]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::InvalidArgument(format!("rate fit needs >= 4 points, got {}", points.len())));
    }
    if let Some(bad) = points.iter().find(|p| !(p.value > 0.0 && p.value.is_finite()) || p.n == 0) {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs positive values (N = {}, value = {})",
            bad.n, bad.value
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.value.ln()).collect();
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::InvalidArgument("rate fit needs at least two distinct N".into()));
    }
    let (slope, intercept) = ols(&x, &y);
    let fitted: Vec<f64> = x.iter().map(|v| intercept + slope * v).collect();
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let mut rng = StreamRng::keyed(0, &[tag::BOOTSTRAP]);
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let yb: Vec<f64> = fitted.iter().map(|f| f + resid[rng.index(resid.len())]).collect();
            ols(&x, &yb).0
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let q = |a: f64| slopes[((a * BOOTSTRAP_RESAMPLES as f64) as usize).min(BOOTSTRAP_RESAMPLES - 1)];
    let slope_ci = (q(0.025).min(slope), q(0.975).max(slope));
    Ok(RateFit {
        points: points.to_vec(),
        slope,
        intercept,
        r2,
        slope_ci,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Sub,
    Critical,
    Saturated,
}

/// Compares `α` with `d/2 + ε`.
pub fn regime_classify(kernel: &KernelSpec) -> Regime {
    let threshold = 0.5 * kernel.d as f64 + kernel.eps;
    if (kernel.alpha - threshold).abs() <= CRITICAL_TOL {
        Regime::Critical
    } else if kernel.alpha < threshold {
        Regime::Sub
    } else {
        Regime::Saturated
    }
}

/// Predicted exponent of `A_N`; `None` at the critical point (log factor).
pub fn wce_exponent(kernel: &KernelSpec) -> Option<f64> {
    let d = kernel.d as f64;
    match regime_classify(kernel) {
        Regime::Sub => Some(-kernel.alpha / d),
        Regime::Saturated => Some(-0.5 - kernel.eps / d),
        Regime::Critical => None,
    }
}

/// Upper-rate exponent of `B_N` for a function of Besov smoothness `alpha`.
pub fn besov_exponent(p: f64, alpha: f64, d: usize) -> f64 {
    let d = d as f64;
    if p <= 2.0 {
        1.0 / p - 1.0 - alpha / d
    } else {
        -0.5 - alpha / d
    }
}

/// Exponent for indicators of sets whose boundary has codimension `beta`.
pub fn indicator_exponent(beta: f64, d: usize) -> f64 {
    -0.5 - beta / (2.0 * d as f64)
}

/// Whether `kernel` can be used in a rate experiment at all.
pub fn rate_kernel_ok(kernel: &KernelSpec) -> bool {
    kernel.family != KernelFamily::Constant
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(ns: &[usize], f: impl Fn(f64) -> f64) -> Vec<RatePoint> {
        ns.iter()
            .map(|&n| RatePoint {
                n,
                value: f(n as f64),
                se: 0.0,
            })
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        let fit = rate_fit(&pts(&[8, 16, 32, 64], |n| 1.0 / n)).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        let fit = rate_fit(&pts(&[16, 32, 64, 128, 256, 512], |n| 7.5 * n.powf(-0.37))).unwrap();
        assert!((fit.slope + 0.37).abs() < 1e-10);
        assert!((fit.intercept - 7.5f64.ln()).abs() < 1e-10);
        assert!(fit.slope_ci.0 <= fit.slope && fit.slope <= fit.slope_ci.1);
    }

    #[test]
    fn perturbed_power_law() {
        let eta = [0.05, -0.05, 0.03, -0.04, 0.05, -0.02];
        let ns = [16, 32, 64, 128, 256, 512];
        let p: Vec<RatePoint> = ns
            .iter()
            .zip(eta)
            .map(|(&n, e)| RatePoint {
                n,
                value: 3.0 * (n as f64).powf(-0.75) * (1.0 + e),
                se: 0.0,
            })
            .collect();
        let fit = rate_fit(&p).unwrap();
        assert!((-0.85..=-0.65).contains(&fit.slope), "{}", fit.slope);
        assert!(fit.slope_ci.0 <= fit.slope && fit.slope <= fit.slope_ci.1);
        assert!(fit.slope_ci.1 - fit.slope_ci.0 > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(rate_fit(&pts(&[8, 16, 32], |n| 1.0 / n)).is_err());
        let mut p = pts(&[8, 16, 32, 64], |n| 1.0 / n);
        p[2].value = 0.0;
        assert!(rate_fit(&p).is_err());
        p[2].value = -1.0;
        assert!(rate_fit(&p).is_err());
    }

    #[test]
    fn regimes() {
        assert_eq!(regime_classify(&KernelSpec::riesz(0.75, 1)), Regime::Sub);
        assert_eq!(regime_classify(&KernelSpec::rough_riesz(0.9, 1, 0.25, 1.0)), Regime::Saturated);
        assert_eq!(regime_classify(&KernelSpec::rough_riesz(1.5, 2, 0.5, 1.0)), Regime::Critical);
        assert_eq!(wce_exponent(&KernelSpec::riesz(1.0, 2)), Some(-0.5));
        assert_eq!(wce_exponent(&KernelSpec::rough_riesz(0.9, 1, 0.25, 1.0)), Some(-0.75));
        assert_eq!(wce_exponent(&KernelSpec::rough_riesz(1.5, 2, 0.5, 1.0)), None);
        assert_eq!(besov_exponent(2.0, 1.0, 1), -1.5);
        assert_eq!(besov_exponent(1.0, 1.0, 1), -1.0);
        assert_eq!(besov_exponent(4.0, 1.0, 1), -1.5);
        assert_eq!(indicator_exponent(1.0, 1), -1.0);
        assert_eq!(indicator_exponent(1.0, 2), -0.75);
    }
}
