//! Empirical Marcinkiewicz–Zygmund comparison for stratified sums.
//!
//! With `f_j = ω_j f(x_j)` the summands are independent, and
//! `middle = {E|Σ_j (f_j − E f_j)|^p}^{1/p}` is compared against
//! `bracket = {E(Σ_j |f_j − E f_j|²)^{p/2}}^{1/p}`. The ratio is bounded
//! above and below by N-independent constants; at p = 2 it is exactly 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubature::draw_nodes_indexed;
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::partition::Partition;
use crate::stats::{jackknife_se, mean_power_root, Estimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MzReport {
    pub p: f64,
    pub n: usize,
    pub n_draws: usize,
    pub middle: Estimate,
    pub bracket: Estimate,
    /// `middle / bracket`; `None` when both vanish identically.
    pub ratio: Option<Estimate>,
    pub degenerate: bool,
}

/// Per-draw `(Σ_j d_j, Σ_j d_j²)` with `d_j = ω_j f(x_j) − ∫_{X_j} f`.
fn draw_sums(f: &TestFunction, partition: &Partition, n_draws: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let space = &partition.space;
    f.check_space(space)?;
    let cell_ints = partition
        .cells
        .iter()
        .map(|c| {
            f.cell_integral(space, c)
                .ok_or_else(|| Error::NoClosedForm(format!("cell integrals of {}", f.name())))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((0..n_draws as u64)
        .into_par_iter()
        .map(|k| {
            let draw = draw_nodes_indexed(partition, seed, k);
            let mut sum = 0.0;
            let mut sq = 0.0;
            for ((c, x), int) in partition.cells.iter().zip(&draw.nodes).zip(&cell_ints) {
                let dj = c.measure * f.eval_in_cell(space, x, c.id) - int;
                sum += dj;
                sq += dj * dj;
            }
            (sum, sq)
        })
        .collect())
}

pub fn mz_pair(f: &TestFunction, partition: &Partition, p: f64, n_draws: usize, seed: u64) -> Result<MzReport> {
    if !(p >= 1.0) || n_draws < 2 {
        return Err(Error::InvalidArgument(format!("need p >= 1 and n_draws >= 2 (p = {p}, n_draws = {n_draws})")));
    }
    let sums = draw_sums(f, partition, n_draws, seed)?;
    let mid_pow: Vec<f64> = sums.iter().map(|(s, _)| s.abs().powf(p)).collect();
    let br_pow: Vec<f64> = sums.iter().map(|(_, q)| q.powf(p / 2.0)).collect();
    let middle = mean_power_root(&mid_pow, p);
    let bracket = mean_power_root(&br_pow, p);

    let degenerate = bracket.value <= 0.0;
    let ratio = if degenerate {
        None
    } else {
        // Joint jackknife, since both roots use the same draws.
        let (tm, tb): (f64, f64) = (mid_pow.iter().sum(), br_pow.iter().sum());
        let k = n_draws as f64 - 1.0;
        let loo: Vec<f64> = mid_pow
            .iter()
            .zip(&br_pow)
            .map(|(m, b)| ((tm - m) / k).max(0.0).powf(1.0 / p) / ((tb - b) / k).max(f64::MIN_POSITIVE).powf(1.0 / p))
            .collect();
        Some(Estimate::new(middle.value / bracket.value, jackknife_se(&loo)))
    };
    Ok(MzReport {
        p,
        n: partition.len(),
        n_draws,
        middle,
        bracket,
        ratio,
        degenerate,
    })
}

/// Observed range of `middle / bracket`; an empirical stand-in for the
/// best constants, never a certified bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MzEnvelope {
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
    /// Largest ratio standard error among the contributing reports.
    pub max_se: f64,
    pub reports: Vec<MzReport>,
    pub note: String,
}

pub fn ratio_envelope(
    functions: &[TestFunction],
    partitions: &[Partition],
    p: f64,
    n_draws: usize,
    seed: u64,
) -> Result<MzEnvelope> {
    if functions.is_empty() || partitions.is_empty() {
        return Err(Error::InvalidArgument("empty configuration set".into()));
    }
    let mut reports = Vec::new();
    for f in functions {
        for part in partitions {
            reports.push(mz_pair(f, part, p, n_draws, seed)?);
        }
    }
    let ratios: Vec<Estimate> = reports.iter().filter_map(|r| r.ratio).collect();
    if ratios.is_empty() {
        return Err(Error::Degenerate("every configuration has zero variance".into()));
    }
    Ok(MzEnvelope {
        p,
        lo: ratios.iter().map(|r| r.value).fold(f64::INFINITY, f64::min),
        hi: ratios.iter().map(|r| r.value).fold(0.0, f64::max),
        max_se: ratios.iter().map(|r| r.se).fold(0.0, f64::max),
        reports,
        note: "empirical, not certified".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::SetDescriptor;
    use crate::partition::{build_partition, torus_grid_partition};
    use crate::space::SpaceDescriptor;

    fn t1() -> SpaceDescriptor {
        SpaceDescriptor::torus(1).unwrap()
    }

    #[test]
    fn p2_ratio_is_one() {
        let s = t1();
        let f = TestFunction::indicator(SetDescriptor::arc(0.11, 0.58));
        for n in [8, 64] {
            let part = torus_grid_partition(&s, n).unwrap();
            let r = mz_pair(&f, &part, 2.0, 4000, 1).unwrap();
            let ratio = r.ratio.unwrap();
            assert!((ratio.value - 1.0).abs() <= 3.0 * ratio.se, "{ratio:?}");
        }
        let sph = SpaceDescriptor::sphere2();
        let cap = TestFunction::indicator(SetDescriptor::cap(crate::space::Point::sphere(0.0, 0.0, 1.0), 0.9));
        let part = build_partition(&sph, 32).unwrap();
        let ratio = mz_pair(&cap, &part, 2.0, 4000, 2).unwrap().ratio.unwrap();
        assert!((ratio.value - 1.0).abs() <= 3.0 * ratio.se, "{ratio:?}");
    }

    #[test]
    fn square_wave_enumeration() {
        // Each summand is ±1/2 with equal probability and zero cell integral.
        let part = torus_grid_partition(&t1(), 2).unwrap();
        let r = mz_pair(&TestFunction::SquareWave { freq: 2 }, &part, 1.0, 4000, 3).unwrap();
        assert!((r.middle.value - 0.5).abs() <= 3.0 * r.middle.se.max(1e-12), "{:?}", r.middle);
        assert!((r.bracket.value - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((r.ratio.unwrap().value - 0.5f64.sqrt()).abs() < 0.05);
    }

    #[test]
    fn constant_is_degenerate() {
        let part = torus_grid_partition(&t1(), 8).unwrap();
        let r = mz_pair(&TestFunction::constant(3.0), &part, 1.5, 50, 0).unwrap();
        assert!(r.degenerate && r.ratio.is_none());
        assert_eq!(r.middle.value, 0.0);
        assert!(ratio_envelope(&[TestFunction::constant(1.0)], &[part], 2.0, 10, 0).is_err());
    }

    #[test]
    fn envelope_is_bounded_in_n() {
        let s = t1();
        let f = TestFunction::indicator(SetDescriptor::arc(0.2, 0.45));
        let parts: Vec<Partition> = [8, 32, 128, 512].iter().map(|&n| torus_grid_partition(&s, n).unwrap()).collect();
        for p in [1.0, 4.0] {
            let env = ratio_envelope(std::slice::from_ref(&f), &parts, p, 2000, 4).unwrap();
            assert!(env.lo > 0.0 && env.hi / env.lo < 2.0, "{p}: {} {}", env.lo, env.hi);
        }
    }

    #[test]
    fn requires_cell_integrals() {
        let part = torus_grid_partition(&t1(), 4).unwrap();
        let f = TestFunction::Coordinate { axis: 0 };
        assert!(mz_pair(&f, &part, 2.0, 10, 0).is_ok());
        assert!(mz_pair(&f, &part, 0.5, 10, 0).is_err());
    }
}
