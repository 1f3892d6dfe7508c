//! Radial kernels `Phi(x, y) = k(|x - y|)` defining potential spaces.
//!
//! * `riesz`: `t^{alpha-d}`.
//! * `rough_riesz`: `t^{alpha-d} + kappa W_eps(t)`, where `W_eps` is a
//!   lacunary cosine series, ε-Hölder at every scale and nowhere smoother.
//! * `riesz_plus_power`: `t^{alpha-d} + kappa t^eps`. Its extra term is only
//!   rough at `t = 0`, so the kernel still behaves like a smooth Riesz kernel
//!   away from the diagonal.
//! * `constant`: `Phi = kappa`, a control kernel whose error functional
//!   vanishes identically.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Cell;
use crate::rng::StreamRng;
use crate::space::{Point, SpaceDescriptor, SpaceKind};

/// Ratio between consecutive frequencies of the lacunary series (the
/// evaluation uses two angle doublings per term).
pub const LACUNARY_BASE: f64 = 4.0;
/// Number of terms; the finest wavelength is below `1e-6` of the diameter.
pub const LACUNARY_TERMS: usize = 12;

/// Samples closer than this to the singularity are redrawn.
pub const SINGULAR_RADIUS: f64 = 1e-12;
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Riesz,
    RoughRiesz,
    RieszPlusPower,
    Constant,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Riesz => "riesz",
            KernelFamily::RoughRiesz => "rough_riesz",
            KernelFamily::RieszPlusPower => "riesz_plus_power",
            KernelFamily::Constant => "constant",
        })
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "riesz" => Ok(KernelFamily::Riesz),
            "rough_riesz" => Ok(KernelFamily::RoughRiesz),
            "riesz_plus_power" => Ok(KernelFamily::RieszPlusPower),
            "constant" => Ok(KernelFamily::Constant),
            other => Err(Error::InvalidArgument(format!("unknown kernel family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub alpha: f64,
    pub d: usize,
    /// Hölder exponent of the kernel away from the diagonal (1 for riesz).
    pub eps: f64,
    /// Roughness amplitude; the constant value for the `constant` family.
    pub kappa: f64,
}

impl KernelSpec {
    pub fn riesz(alpha: f64, d: usize) -> Self {
        Self {
            family: KernelFamily::Riesz,
            alpha,
            d,
            eps: 1.0,
            kappa: 0.0,
        }
    }

    pub fn rough_riesz(alpha: f64, d: usize, eps: f64, kappa: f64) -> Self {
        Self {
            family: KernelFamily::RoughRiesz,
            alpha,
            d,
            eps,
            kappa,
        }
    }

    pub fn riesz_plus_power(alpha: f64, d: usize, eps: f64, kappa: f64) -> Self {
        Self {
            family: KernelFamily::RieszPlusPower,
            alpha,
            d,
            eps,
            kappa,
        }
    }

    /// Control kernel `Phi = value`.
    pub fn constant(value: f64, d: usize) -> Self {
        Self {
            family: KernelFamily::Constant,
            alpha: 0.5 * d as f64,
            d,
            eps: 1.0,
            kappa: value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d as f64;
        if self.family != KernelFamily::Constant && !(self.alpha > 0.0 && self.alpha < d) {
            return Err(Error::InvalidArgument(format!(
                "kernel exponent alpha = {} outside (0, {d})",
                self.alpha
            )));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps = {} outside (0, 1]", self.eps)));
        }
        match self.family {
            KernelFamily::RoughRiesz | KernelFamily::RieszPlusPower if self.kappa <= 0.0 => {
                Err(Error::InvalidArgument(format!("{} requires kappa > 0", self.family)))
            }
            _ => Ok(()),
        }
    }

    pub fn profile(&self, space: &SpaceDescriptor) -> KernelProfile {
        KernelProfile {
            family: self.family,
            exponent: self.alpha - self.d as f64,
            eps: self.eps,
            kappa: self.kappa,
            base_freq: lacunary_base_frequency(space.kind),
        }
    }

    /// `Phi(x, y)`; errors on coincident points.
    pub fn eval(&self, space: &SpaceDescriptor, x: &Point, y: &Point) -> Result<f64> {
        let t = space.distance(x, y);
        if t <= 0.0 {
            return Err(Error::Singularity(t));
        }
        Ok(self.profile(space).value(t))
    }

    /// `∫_M Phi(z, y) dz`, which does not depend on `y` on either space.
    pub fn space_integral(&self, space: &SpaceDescriptor) -> f64 {
        let s = self.alpha - self.d as f64;
        let power = |e: f64| radial_power_integral(space, e);
        match self.family {
            KernelFamily::Constant => self.kappa * space.total_measure,
            KernelFamily::Riesz => power(s),
            KernelFamily::RieszPlusPower => power(s) + self.kappa * power(self.eps),
            KernelFamily::RoughRiesz => {
                let w0 = lacunary_base_frequency(space.kind);
                let series: f64 = (0..LACUNARY_TERMS)
                    .map(|k| {
                        let b = LACUNARY_BASE.powi(k as i32);
                        b.powf(-self.eps) * radial_cos_integral(space, w0 * b)
                    })
                    .sum();
                power(s) + self.kappa * series
            }
        }
    }
}

fn lacunary_base_frequency(kind: SpaceKind) -> f64 {
    match kind {
        SpaceKind::Torus => 2.0 * PI,
        SpaceKind::Sphere2 => 1.0,
    }
}

/// Kernel with its parameters unpacked for hot loops.
#[derive(Debug, Clone, Copy)]
pub struct KernelProfile {
    family: KernelFamily,
    exponent: f64,
    eps: f64,
    kappa: f64,
    base_freq: f64,
}

impl KernelProfile {
    /// Kernel value at distance `t > 0`.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match self.family {
            KernelFamily::Riesz => t.powf(self.exponent),
            KernelFamily::RoughRiesz => t.powf(self.exponent) + self.kappa * self.lacunary(t),
            KernelFamily::RieszPlusPower => t.powf(self.exponent) + self.kappa * t.powf(self.eps),
            KernelFamily::Constant => self.kappa,
        }
    }

    #[inline]
    fn lacunary(&self, t: f64) -> f64 {
        let decay = LACUNARY_BASE.powf(-self.eps);
        let mut amp = 1.0;
        let (mut s, mut c) = (self.base_freq * t).sin_cos();
        let mut sum = 0.0;
        for _ in 0..LACUNARY_TERMS {
            sum += amp * c;
            amp *= decay;
            // Two angle doublings multiply the frequency by 4.
            for _ in 0..2 {
                (s, c) = (2.0 * s * c, (c - s) * (c + s));
            }
        }
        sum
    }
}

/// `∫_M r(z, y)^e dz` for `e > -d`.
fn radial_power_integral(space: &SpaceDescriptor, e: f64) -> f64 {
    match space.kind {
        SpaceKind::Torus => {
            // density of r is d 2^d r^{d-1} on [0, 1/2]
            let d = space.d as f64;
            d * 2f64.powf(-e) / (e + d)
        }
        SpaceKind::Sphere2 => {
            // 2pi ∫_0^pi θ^e sin θ dθ, expanding sin in its Taylor series.
            let mut sum = 0.0;
            let mut fact = 1.0; // (2k+1)!
            for k in 0..40 {
                let kk = k as f64;
                if k > 0 {
                    fact *= (2.0 * kk) * (2.0 * kk + 1.0);
                }
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign * PI.powf(e + 2.0 * kk + 2.0) / (fact * (e + 2.0 * kk + 2.0));
            }
            2.0 * PI * sum
        }
    }
}

/// `∫_M cos(a r(z, y)) dz`.
fn radial_cos_integral(space: &SpaceDescriptor, a: f64) -> f64 {
    match space.kind {
        SpaceKind::Torus => {
            let d = space.d;
            let c = d as f64 * 2f64.powi(d as i32);
            c * cos_moment(d - 1, a, 0.5).0
        }
        SpaceKind::Sphere2 => {
            // 2pi ∫_0^pi cos(aθ) sin θ dθ = pi ∫ [sin((1+a)θ) + sin((1-a)θ)] dθ
            let term = |b: f64| {
                if b.abs() < 1e-12 {
                    0.0
                } else {
                    (1.0 - (b * PI).cos()) / b
                }
            };
            PI * (term(1.0 + a) + term(1.0 - a))
        }
    }
}

/// `(∫_0^L r^m cos(ar) dr, ∫_0^L r^m sin(ar) dr)` by integration by parts.
fn cos_moment(m: usize, a: f64, l: f64) -> (f64, f64) {
    let (s, c) = (a * l).sin_cos();
    let mut cm = s / a;
    let mut sm = (1.0 - c) / a;
    for k in 1..=m {
        let lk = l.powi(k as i32);
        let kf = k as f64;
        let next_c = lk * s / a - kf / a * sm;
        let next_s = -lk * c / a + kf / a * cm;
        cm = next_c;
        sm = next_s;
    }
    (cm, sm)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub triples: usize,
    pub declared_eps: f64,
    /// `max |Phi(x,y) - Phi(z,y)| / (|x-z|^eps |x-y|^{alpha-d-eps})`.
    pub diff_ratio_max: f64,
    /// `max |Phi(x,y)| / |x-y|^{alpha-d}`.
    pub size_ratio_max: f64,
}

/// Sampled suprema of the size and Hölder ratios over triples with
/// `|x-y| >= 2|x-z|`, using the kernel's own `eps`.
pub fn kernel_bounds_check(
    spec: &KernelSpec,
    space: &SpaceDescriptor,
    n_triples: usize,
    min_sep: f64,
    seed: u64,
) -> BoundsReport {
    kernel_bounds_check_with(spec, space, spec.eps, n_triples, min_sep, seed)
}

/// As [`kernel_bounds_check`] with an explicitly declared Hölder exponent.
///
/// `|x - z|` is drawn log-uniformly in `[min_sep, diam/8]`.
pub fn kernel_bounds_check_with(
    spec: &KernelSpec,
    space: &SpaceDescriptor,
    declared_eps: f64,
    n_triples: usize,
    min_sep: f64,
    seed: u64,
) -> BoundsReport {
    let prof = spec.profile(space);
    let s = spec.alpha - spec.d as f64;
    let r_max = space.diameter() / 8.0;
    let (lmin, lmax) = (min_sep.ln(), r_max.ln());
    let mut rng = StreamRng::keyed(seed, &[crate::rng::tag::CHECK, 1]);
    let mut diff_max: f64 = 0.0;
    let mut size_max: f64 = 0.0;
    let mut used = 0;
    for _ in 0..n_triples {
        let x = space.sample_uniform(&mut rng);
        let r = (lmin + (lmax - lmin) * rng.uniform()).exp();
        let z = space.offset_point(&x, r, &mut rng);
        let r = space.distance(&x, &z);
        let mut y = space.sample_uniform(&mut rng);
        let mut tries = 0;
        while space.distance(&x, &y) < 2.0 * r && tries < 1000 {
            y = space.sample_uniform(&mut rng);
            tries += 1;
        }
        let t = space.distance(&x, &y);
        let tz = space.distance(&z, &y);
        if t < 2.0 * r || tz <= 0.0 || r <= 0.0 {
            continue;
        }
        used += 1;
        let fx = prof.value(t);
        let fz = prof.value(tz);
        diff_max = diff_max.max((fx - fz).abs() / (r.powf(declared_eps) * t.powf(s - declared_eps)));
        size_max = size_max.max(fx.abs() / t.powf(s));
    }
    BoundsReport {
        triples: used,
        declared_eps,
        diff_ratio_max: diff_max,
        size_ratio_max: size_max,
    }
}

/// One or two independent Monte Carlo estimates of `(1/ω) ∫_X Phi(z, y) dz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub first: f64,
    pub second: Option<f64>,
}

/// Monte Carlo mean of `Phi(·, y)` over a cell with `m_z` uniform samples
/// per replica; samples within [`SINGULAR_RADIUS`] of `y` are redrawn.
pub fn cell_kernel_mean(
    prof: &KernelProfile,
    space: &SpaceDescriptor,
    cell: &Cell,
    y: &Point,
    m_z: usize,
    rng: &mut StreamRng,
    replicas: usize,
) -> Result<CellMean> {
    if m_z == 0 || !(1..=2).contains(&replicas) {
        return Err(Error::InvalidArgument(format!(
            "cell mean needs m_z >= 1 and 1 or 2 replicas (got {m_z}, {replicas})"
        )));
    }
    let mut one = || -> Result<f64> {
        let mut sum = 0.0;
        for _ in 0..m_z {
            let mut redraws = 0;
            let t = loop {
                let z = cell.sample(rng);
                let t = space.distance(&z, y);
                if t >= SINGULAR_RADIUS {
                    break t;
                }
                redraws += 1;
                if redraws > MAX_REDRAWS {
                    return Err(Error::RedrawExhausted(redraws));
                }
            };
            sum += prof.value(t);
        }
        Ok(sum / m_z as f64)
    };
    let first = one()?;
    let second = if replicas == 2 { Some(one()?) } else { None };
    Ok(CellMean { first, second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::torus_grid_partition;

    fn t1() -> SpaceDescriptor {
        SpaceDescriptor::torus(1).unwrap()
    }

    #[test]
    fn eval_examples() {
        let s = t1();
        let k = KernelSpec::riesz(0.6, 1);
        let v = k.eval(&s, &Point::torus(&[0.0]), &Point::torus(&[0.25])).unwrap();
        assert!((v - 1.741_101).abs() < 1e-6);
        let k = KernelSpec::riesz_plus_power(0.9, 1, 0.25, 1.0);
        let v = k.eval(&s, &Point::torus(&[0.0]), &Point::torus(&[0.16])).unwrap();
        // 0.16^{-0.1} + 0.16^{0.25} = 1.2011161... + 0.6324555... = 1.833580
        assert!((v - 1.833_580).abs() < 1e-6, "{v}");
        assert!(matches!(
            k.eval(&s, &Point::torus(&[0.3]), &Point::torus(&[0.3])),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn validation() {
        assert!(KernelSpec::riesz(0.75, 1).validate().is_ok());
        assert!(KernelSpec::riesz(1.0, 1).validate().is_err());
        assert!(KernelSpec::rough_riesz(0.9, 1, 0.25, 0.0).validate().is_err());
        assert!(KernelSpec::rough_riesz(0.9, 1, 1.5, 1.0).validate().is_err());
        assert!(KernelSpec::constant(1.0, 1).validate().is_ok());
    }

    /// Midpoint rule in the radial variable with a graded mesh near 0.
    fn radial_quadrature(space: &SpaceDescriptor, f: impl Fn(f64) -> f64) -> f64 {
        let (r_max, density): (f64, Box<dyn Fn(f64) -> f64>) = match space.kind {
            SpaceKind::Torus => {
                let d = space.d as i32;
                (0.5, Box::new(move |r: f64| d as f64 * 2f64.powi(d) * r.powi(d - 1)))
            }
            SpaceKind::Sphere2 => (PI, Box::new(|r: f64| 2.0 * PI * r.sin())),
        };
        // r = r_max u^4 removes the integrable singularity at 0.
        let m = 400_000;
        let h = 1.0 / m as f64;
        (0..m)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                let r = r_max * u.powi(4);
                f(r) * density(r) * 4.0 * r_max * u.powi(3) * h
            })
            .sum()
    }

    #[test]
    fn space_integrals_match_quadrature() {
        let spaces = [
            t1(),
            SpaceDescriptor::torus(2).unwrap(),
            SpaceDescriptor::sphere2(),
        ];
        for space in spaces {
            let d = space.d;
            let alpha = 0.75 * d as f64;
            for spec in [
                KernelSpec::riesz(alpha, d),
                KernelSpec::riesz_plus_power(alpha, d, 0.3, 0.7),
                KernelSpec::rough_riesz(alpha, d, 0.25, 1.0),
            ] {
                let prof = spec.profile(&space);
                let quad = radial_quadrature(&space, |r| prof.value(r));
                let closed = spec.space_integral(&space);
                assert!(
                    (quad - closed).abs() < 2e-4 * closed.abs().max(1.0),
                    "{:?} {:?}: {quad} vs {closed}",
                    space.kind,
                    spec.family
                );
            }
        }
    }

    #[test]
    fn torus_riesz_integral_closed_form() {
        // 2^{0.4} / 0.6
        let v = KernelSpec::riesz(0.6, 1).space_integral(&t1());
        assert!((v - 2.199_180).abs() < 1e-6, "{v}");
    }

    #[test]
    fn cell_mean_converges_to_antiderivative() {
        let s = t1();
        let p = torus_grid_partition(&s, 2).unwrap();
        let k = KernelSpec::riesz(0.6, 1);
        let prof = k.profile(&s);
        let y = Point::torus(&[0.75]);
        let mut rng = StreamRng::new(12);
        let est = cell_kernel_mean(&prof, &s, &p.cells[0], &y, 400_000, &mut rng, 1).unwrap();
        let exact = (4.0 / 0.6) * (0.5f64.powf(0.6) - 0.25f64.powf(0.6));
        assert!((est.first - exact).abs() < 5e-3, "{} {exact}", est.first);
    }

    #[test]
    fn constant_kernel_cell_mean_is_exact() {
        let s = t1();
        let p = torus_grid_partition(&s, 4).unwrap();
        let prof = KernelSpec::constant(1.0, 1).profile(&s);
        let mut rng = StreamRng::new(1);
        let m = cell_kernel_mean(&prof, &s, &p.cells[1], &Point::torus(&[0.9]), 16, &mut rng, 2).unwrap();
        assert_eq!(m.first, 1.0);
        assert_eq!(m.second, Some(1.0));
    }

    #[test]
    fn replicas_are_independent() {
        let s = t1();
        let p = torus_grid_partition(&s, 2).unwrap();
        let prof = KernelSpec::riesz(0.6, 1).profile(&s);
        let y = Point::torus(&[0.75]);
        let reps = 400;
        let (mut a, mut b, mut single, mut cross) = (0.0, 0.0, 0.0, 0.0);
        for r in 0..reps {
            let mut rng = StreamRng::keyed(5, &[r]);
            let m = cell_kernel_mean(&prof, &s, &p.cells[0], &y, 64, &mut rng, 2).unwrap();
            let second = m.second.unwrap();
            assert_ne!(m.first, second);
            a += m.first;
            b += second;
            cross += m.first * second;
            let mut rng = StreamRng::keyed(6, &[r]);
            single += cell_kernel_mean(&prof, &s, &p.cells[0], &y, 64, &mut rng, 1).unwrap().first;
        }
        let (a, b, single) = (a / reps as f64, b / reps as f64, single / reps as f64);
        let avg = 0.5 * (a + b);
        assert!((avg - single).abs() < 0.01, "{avg} {single}");
        // Independent replicas: E[m1 m2] = E[m1] E[m2].
        assert!((cross / reps as f64 - a * b).abs() < 0.01);
    }

    #[test]
    fn bounds_check_riesz_is_stable() {
        let s = t1();
        let k = KernelSpec::riesz(0.6, 1);
        let a = kernel_bounds_check(&k, &s, 10_000, 1e-4, 1);
        let b = kernel_bounds_check(&k, &s, 20_000, 1e-4, 2);
        assert!(a.diff_ratio_max.is_finite() && a.size_ratio_max.is_finite());
        assert!(b.diff_ratio_max < 1.5 * a.diff_ratio_max + 1e-9);
        assert!(b.size_ratio_max < 1.5 * a.size_ratio_max + 1e-9);
    }

    #[test]
    fn rough_kernel_fails_with_overstated_eps() {
        let s = t1();
        let k = KernelSpec::rough_riesz(0.9, 1, 0.25, 1.0);
        let ok_coarse = kernel_bounds_check(&k, &s, 20_000, 1e-3, 3);
        let ok_fine = kernel_bounds_check(&k, &s, 20_000, 1e-5, 3);
        assert!(ok_fine.diff_ratio_max < 3.0 * ok_coarse.diff_ratio_max);
        let bad_coarse = kernel_bounds_check_with(&k, &s, 1.0, 20_000, 1e-3, 3);
        let bad_fine = kernel_bounds_check_with(&k, &s, 1.0, 20_000, 1e-5, 3);
        assert!(
            bad_fine.diff_ratio_max >= 10.0 * bad_coarse.diff_ratio_max,
            "{} {}",
            bad_fine.diff_ratio_max,
            bad_coarse.diff_ratio_max
        );
    }

    #[test]
    fn zero_kappa_matches_riesz() {
        let s = t1();
        let mut k = KernelSpec::rough_riesz(0.6, 1, 1.0, 1.0);
        k.kappa = 0.0;
        let a = kernel_bounds_check(&k, &s, 2000, 1e-3, 9);
        let b = kernel_bounds_check(&KernelSpec::riesz(0.6, 1), &s, 2000, 1e-3, 9);
        assert_eq!(a.diff_ratio_max, b.diff_ratio_max);
        assert_eq!(a.size_ratio_max, b.size_ratio_max);
    }

    #[test]
    fn lacunary_recurrence_matches_direct_cosines() {
        let s = t1();
        let prof = KernelSpec::rough_riesz(0.9, 1, 0.25, 1.0).profile(&s);
        let mut rng = StreamRng::new(3);
        for _ in 0..10_000 {
            let t = 0.5 * rng.uniform();
            let direct: f64 = (0..LACUNARY_TERMS)
                .map(|k| LACUNARY_BASE.powf(-0.25 * k as f64) * (2.0 * PI * LACUNARY_BASE.powi(k as i32) * t).cos())
                .sum();
            assert!((prof.lacunary(t) - direct).abs() < 1e-8, "{t}");
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = StreamRng::new(77);
        for space in [t1(), SpaceDescriptor::sphere2()] {
            let k = KernelSpec::rough_riesz(0.75 * space.d as f64, space.d, 0.5, 1.0);
            for _ in 0..1000 {
                let x = space.sample_uniform(&mut rng);
                let y = space.sample_uniform(&mut rng);
                assert_eq!(k.eval(&space, &x, &y).unwrap(), k.eval(&space, &y, &x).unwrap());
            }
        }
    }
}
