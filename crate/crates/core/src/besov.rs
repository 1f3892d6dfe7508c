//! φ-gradients for `φ(t) = t^alpha`, boundary tube measures, the local
//! Poincaré inequality, Besov-class error bounds, and the bump functions that
//! show those bounds are attained.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{Bump, TestFunction};
use crate::partition::{Cell, CellGeometry, Partition};
use crate::rng::{tag, StreamRng};
use crate::space::{rotate_towards, tangent_frame, wrap_diff, Point, SpaceDescriptor, SpaceKind};
use crate::stats::{mean_se, moment_root, Estimate};

/// Tube measures below this fraction of `|M|` end the scale grid.
const PSI_FLOOR: f64 = 1e-9;

/// A set with piecewise smooth boundary (boundary dimension `d - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetDescriptor {
    /// Product of circular arcs `[start_i, start_i + len_i)` on the torus.
    TorusBox { start: Vec<f64>, len: Vec<f64> },
    SphericalCap { center: Point, radius: f64 },
}

impl SetDescriptor {
    pub fn torus_box(start: Vec<f64>, len: Vec<f64>) -> Self {
        SetDescriptor::TorusBox { start, len }
    }

    /// The arc `[a, b)` on `T^1`.
    pub fn arc(a: f64, b: f64) -> Self {
        SetDescriptor::TorusBox {
            start: vec![a],
            len: vec![b - a],
        }
    }

    pub fn cap(center: Point, radius: f64) -> Self {
        SetDescriptor::SphericalCap { center, radius }
    }

    pub fn check_space(&self, space: &SpaceDescriptor) -> Result<()> {
        match self {
            SetDescriptor::TorusBox { start, len } => {
                if space.kind != SpaceKind::Torus || start.len() != space.d || len.len() != space.d {
                    return Err(Error::UnsupportedSpace(format!("torus box on {}", space.kind)));
                }
                if len.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
                    return Err(Error::InvalidArgument("box side lengths must lie in (0, 1]".into()));
                }
                Ok(())
            }
            SetDescriptor::SphericalCap { radius, .. } => {
                if space.kind != SpaceKind::Sphere2 {
                    return Err(Error::UnsupportedSpace(format!("spherical cap on {}", space.kind)));
                }
                if !(*radius > 0.0 && *radius < PI) {
                    return Err(Error::InvalidArgument("cap radius must lie in (0, pi)".into()));
                }
                Ok(())
            }
        }
    }

    /// Codimension of the boundary: `psi(t) <= c t^beta`.
    pub fn beta(&self) -> f64 {
        1.0
    }

    pub fn contains(&self, x: &Point) -> bool {
        match self {
            SetDescriptor::TorusBox { start, len } => start
                .iter()
                .zip(len)
                .enumerate()
                .all(|(i, (&s, &l))| (x.x(i) - s).rem_euclid(1.0) < l),
            SetDescriptor::SphericalCap { center, radius } => {
                let dot: f64 = (0..3).map(|i| x.x(i) * center.x(i)).sum();
                dot >= radius.cos()
            }
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            SetDescriptor::TorusBox { len, .. } => len.iter().product(),
            SetDescriptor::SphericalCap { radius, .. } => 2.0 * PI * (1.0 - radius.cos()),
        }
    }

    /// `dist(x, ∂B)`.
    pub fn boundary_distance(&self, space: &SpaceDescriptor, x: &Point) -> f64 {
        match self {
            SetDescriptor::TorusBox { start, len } => {
                let axes = start.iter().zip(len).enumerate().filter(|(_, (_, &l))| l < 1.0);
                if self.contains(x) {
                    axes.map(|(i, (&s, &l))| wrap_diff(x.x(i), s).min(wrap_diff(x.x(i), s + l)))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    axes.map(|(i, (&s, &l))| {
                        if (x.x(i) - s).rem_euclid(1.0) < l {
                            0.0
                        } else {
                            wrap_diff(x.x(i), s).min(wrap_diff(x.x(i), s + l))
                        }
                    })
                    .fold(0.0, f64::max)
                }
            }
            SetDescriptor::SphericalCap { center, radius } => (space.distance(x, center) - radius).abs(),
        }
    }

    /// Closed-form `psi_B(t) = |{x : dist(x, ∂B) <= t}|`.
    pub fn psi(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            SetDescriptor::TorusBox { len, .. } => {
                // Π a_i - Π b_i telescoped, so small tubes lose no digits.
                let a: Vec<f64> = len.iter().map(|&l| if l >= 1.0 { 1.0 } else { (l + 2.0 * t).min(1.0) }).collect();
                let b: Vec<f64> = len.iter().map(|&l| if l >= 1.0 { 1.0 } else { (l - 2.0 * t).max(0.0) }).collect();
                (0..a.len())
                    .map(|i| {
                        let before: f64 = b[..i].iter().product();
                        let after: f64 = a[i + 1..].iter().product();
                        before * (a[i] - b[i]) * after
                    })
                    .sum()
            }
            SetDescriptor::SphericalCap { radius, .. } => {
                let lo = (radius - t).max(0.0);
                let hi = (radius + t).min(PI);
                // 2π (cos lo - cos hi), in product form
                4.0 * PI * (0.5 * (lo + hi)).sin() * (0.5 * (hi - lo)).sin()
            }
        }
    }

    /// `|B ∩ cell|` when it has a closed form.
    pub fn cell_overlap(&self, space: &SpaceDescriptor, cell: &Cell) -> Option<f64> {
        match (self, &cell.geometry) {
            (SetDescriptor::TorusBox { start, len }, CellGeometry::TorusBox { lo, hi }) => Some(
                (0..lo.len())
                    .map(|i| circular_overlap(start[i], len[i], lo[i], hi[i]))
                    .product(),
            ),
            (
                SetDescriptor::SphericalCap { center, radius },
                CellGeometry::SphereZone {
                    theta_lo,
                    theta_hi,
                    phi_lo,
                    phi_hi,
                },
            ) if center.x(2).abs() == 1.0 => {
                // Polar caps are colatitude bands, so the overlap is a zone.
                let (a, b) = if center.x(2) > 0.0 {
                    (*theta_lo, theta_hi.min(*radius))
                } else {
                    (theta_lo.max(PI - radius), *theta_hi)
                };
                Some(if b > a { (phi_hi - phi_lo) * (a.cos() - b.cos()) } else { 0.0 })
            }
            (SetDescriptor::SphericalCap { center, radius }, _) => {
                (cell.distance_to(space, center) >= *radius).then_some(0.0)
            }
            _ => None,
        }
    }
}

/// Length of `[s, s+l) mod 1` intersected with `[a, b) ⊂ [0, 1)`.
fn circular_overlap(s: f64, l: f64, a: f64, b: f64) -> f64 {
    if l >= 1.0 {
        return b - a;
    }
    let s = s.rem_euclid(1.0);
    [-1.0, 0.0, 1.0]
        .iter()
        .map(|k| {
            let lo = (s + k).max(a);
            let hi = (s + k + l).min(b);
            (hi - lo).max(0.0)
        })
        .sum()
}

/// `psi_B(t)`, in closed form for every implemented set.
pub fn psi_tube_measure(set: &SetDescriptor, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("tube width must be nonnegative, got {t}")));
    }
    Ok(set.psi(t))
}

/// Monte Carlo `psi_B(t)`: membership fraction of uniform samples.
pub fn psi_monte_carlo(space: &SpaceDescriptor, set: &SetDescriptor, t: f64, budget: usize, seed: u64) -> Estimate {
    let mut rng = StreamRng::keyed(seed, &[tag::CHECK, 2]);
    let hits: Vec<f64> = (0..budget)
        .map(|_| {
            let x = space.sample_uniform(&mut rng);
            if set.boundary_distance(space, &x) <= t {
                space.total_measure
            } else {
                0.0
            }
        })
        .collect();
    mean_se(&hits)
}

/// Smallest scale index: `2^{-n} <= 2^{n0}` covers the diameter.
pub fn scale_floor(space: &SpaceDescriptor) -> i32 {
    space.diameter().log2().ceil() as i32
}

/// A φ-gradient `{g_n}` for `φ(t) = t^alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiGradient {
    /// `g_n = 2^{n alpha}` on the inner boundary tube of width `2^{-n}`.
    Chi { set: SetDescriptor, alpha: f64 },
    /// Constant in `x`: `g_n = min(L 2^{-n}, 2S) 2^{n alpha} / 2`.
    Lipschitz { alpha: f64, lipschitz: f64, sup: f64 },
    /// Identically zero; only valid for constants.
    Zero { alpha: f64 },
}

impl PhiGradient {
    pub fn alpha(&self) -> f64 {
        match self {
            PhiGradient::Chi { alpha, .. } | PhiGradient::Lipschitz { alpha, .. } | PhiGradient::Zero { alpha } => *alpha,
        }
    }

    pub fn phi(&self, t: f64) -> f64 {
        t.powf(self.alpha())
    }

    pub fn eval(&self, space: &SpaceDescriptor, n: i32, x: &Point) -> f64 {
        let h = 2f64.powi(-n);
        match self {
            PhiGradient::Chi { set, alpha } => {
                if set.contains(x) && set.boundary_distance(space, x) <= h {
                    h.powf(-alpha)
                } else {
                    0.0
                }
            }
            PhiGradient::Lipschitz { alpha, lipschitz, sup } => {
                0.5 * (lipschitz * h).min(2.0 * sup) * h.powf(-alpha)
            }
            PhiGradient::Zero { .. } => 0.0,
        }
    }
}

pub fn chi_phi_gradient(set: &SetDescriptor, alpha: f64) -> Result<PhiGradient> {
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    Ok(PhiGradient::Chi { set: set.clone(), alpha })
}

/// Gradient for a Lipschitz function; requires `alpha <= 1`.
pub fn lipschitz_phi_gradient(f: &TestFunction, space: &SpaceDescriptor, alpha: f64) -> Result<PhiGradient> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("Lipschitz gradients need 0 < alpha <= 1, got {alpha}")));
    }
    let lipschitz = f
        .lipschitz(space)
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not Lipschitz", f.name())))?;
    Ok(PhiGradient::Lipschitz {
        alpha,
        lipschitz,
        sup: f.sup_abs(),
    })
}

/// Number of sampled pairs with `dist <= 2^{-n}` violating
/// `|f(x) - f(y)| <= φ(2^{-n}) (g_n(x) + g_n(y))`.
pub fn gradient_violations(
    space: &SpaceDescriptor,
    f: &TestFunction,
    grad: &PhiGradient,
    n: i32,
    pairs: usize,
    seed: u64,
) -> usize {
    let h = 2f64.powi(-n).min(space.diameter());
    let mut rng = StreamRng::keyed(seed, &[tag::CHECK, 3, n as u64]);
    (0..pairs)
        .filter(|_| {
            let x = space.sample_uniform(&mut rng);
            let y = space.offset_point(&x, h * rng.uniform(), &mut rng);
            let lhs = (f.eval(space, &x) - f.eval(space, &y)).abs();
            let rhs = grad.phi(2f64.powi(-n)) * (grad.eval(space, n, &x) + grad.eval(space, n, &y));
            lhs > rhs * (1.0 + 1e-12) + 1e-14
        })
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesovBound {
    pub value: f64,
    /// Scale index attaining the supremum.
    pub argmax_n: i32,
    /// Set when `p alpha > beta`: the indicator is then not in the class and
    /// `value` is only the supremum over the truncated scale grid.
    pub warning: Option<String>,
}

/// `sup_{n >= -n0} 2^{n alpha} psi_B(2^{-n})^{1/p}`, truncated once
/// `psi_B(2^{-n}) < 1e-9 |M|`.
pub fn besov_norm_bound_chi(space: &SpaceDescriptor, set: &SetDescriptor, alpha: f64, p: f64) -> Result<BesovBound> {
    set.check_space(space)?;
    if alpha <= 0.0 || p < 1.0 {
        return Err(Error::InvalidArgument(format!("need alpha > 0 and p >= 1 (alpha = {alpha}, p = {p})")));
    }
    let warning = (p * alpha > set.beta() + 1e-12).then(|| {
        format!(
            "p*alpha = {} exceeds the boundary exponent {}: the indicator is not in this Besov class",
            p * alpha,
            set.beta()
        )
    });
    let mut best = 0.0;
    let mut argmax = -scale_floor(space);
    let mut n = -scale_floor(space);
    loop {
        let h = 2f64.powi(-n);
        let psi = set.psi(h);
        if psi < PSI_FLOOR * space.total_measure {
            break;
        }
        let v = h.powf(-alpha) * psi.powf(1.0 / p);
        if v > best * (1.0 + 1e-12) {
            best = v;
            argmax = n;
        }
        n += 1;
    }
    Ok(BesovBound {
        value: best,
        argmax_n: argmax,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub holds: bool,
}

/// Sampled check of
/// `{⨍_X |f - f_X|^p}^{1/p} <= 2 φ(2^{-n}) {⨍_X g_n^p}^{1/p}` on one cell.
#[allow(clippy::too_many_arguments)]
pub fn poincare_check(
    space: &SpaceDescriptor,
    f: &TestFunction,
    grad: &PhiGradient,
    cell: &Cell,
    p: f64,
    n: i32,
    budget: usize,
    seed: u64,
) -> Result<PoincareReport> {
    let h = 2f64.powi(-n);
    if cell.diameter > h * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "cell diameter {} exceeds 2^-{n} = {h}",
            cell.diameter
        )));
    }
    let mut rng = StreamRng::keyed(seed, &[tag::CHECK, 4, cell.id as u64, n as u64]);
    let mean = match f.cell_integral(space, cell) {
        Some(v) => v / cell.measure,
        None => {
            let xs: Vec<f64> = (0..budget).map(|_| f.eval(space, &cell.sample(&mut rng))).collect();
            mean_se(&xs).value
        }
    };
    let mut dev = Vec::with_capacity(budget);
    let mut grads = Vec::with_capacity(budget);
    for _ in 0..budget {
        let x = cell.sample(&mut rng);
        dev.push(f.eval(space, &x) - mean);
        grads.push(grad.eval(space, n, &x));
    }
    let lhs = moment_root(&dev, p);
    let g = moment_root(&grads, p);
    let scale = 2.0 * grad.phi(h);
    let rhs = Estimate::new(scale * g.value, scale * g.se);
    let holds = lhs.value <= rhs.value + 3.0 * lhs.se.hypot(rhs.se);
    Ok(PoincareReport { lhs, rhs, holds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsBounds {
    /// `2 |M|^{1-1/p} φ(2δ) ‖f‖`.
    pub rhs1: f64,
    /// `2 B(p) sup ω_j^{1-1/p} φ(2δ) ‖f‖`, stated for `1 <= p <= 2`.
    pub rhs2: f64,
    /// `2 B(p) |M|^{1/2-1/p} sup ω_j^{1/2} φ(2δ) ‖f‖`, stated for `p >= 2`.
    pub rhs3: f64,
    pub warnings: Vec<String>,
}

/// Right-hand sides of the three Besov error bounds; `b_p` is the
/// (empirical) upper moment constant.
pub fn besov_rhs_bounds(partition: &Partition, p: f64, alpha: f64, norm: f64, b_p: f64) -> Result<RhsBounds> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    let m = partition.space.total_measure;
    let delta = partition.max_diameter();
    let phi = (2.0 * delta).powf(alpha);
    let w_max = partition.cells.iter().map(|c| c.measure).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    if p > 2.0 {
        warnings.push(format!("rhs2 is only stated for p <= 2 (p = {p})"));
    }
    if p < 2.0 {
        warnings.push(format!("rhs3 is only stated for p >= 2 (p = {p})"));
    }
    Ok(RhsBounds {
        rhs1: 2.0 * m.powf(1.0 - 1.0 / p) * phi * norm,
        rhs2: 2.0 * b_p * w_max.powf(1.0 - 1.0 / p) * phi * norm,
        rhs3: 2.0 * b_p * m.powf(0.5 - 1.0 / p) * w_max.sqrt() * phi * norm,
        warnings,
    })
}

/// Placement of the two bumps inside one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessParams {
    pub cell: usize,
    pub peak: Point,
    pub trough: Point,
    /// Support radius of each cone.
    pub radius: f64,
    /// Weight of the negative cone making the mean zero.
    pub theta: f64,
}

/// Two equal cones of opposite sign and radius `r/4`, centered at distance
/// `r/2` from the cell anchor on either side, `r` being the cell inradius.
/// Both supports lie in the inscribed ball and are disjoint.
pub fn sharpness_params(partition: &Partition, j: usize) -> Result<SharpnessParams> {
    let space = &partition.space;
    let cell = partition
        .cells
        .get(j)
        .ok_or_else(|| Error::InvalidArgument(format!("cell {j} out of range")))?;
    let r = cell.inradius();
    if !(r > 0.0) {
        return Err(Error::Degenerate(format!("cell {j} has no interior ball")));
    }
    let (peak, trough, radius) = match space.kind {
        SpaceKind::Torus => {
            let mut a = [0.0; 3];
            let mut b = [0.0; 3];
            for i in 0..space.d {
                a[i] = cell.anchor.x(i);
                b[i] = cell.anchor.x(i);
            }
            a[0] += 0.5 * r;
            b[0] -= 0.5 * r;
            (Point::torus(&a[..space.d]), Point::torus(&b[..space.d]), 0.25 * r)
        }
        SpaceKind::Sphere2 => {
            let (e1, e2) = tangent_frame(&cell.anchor);
            let peak = rotate_towards(&cell.anchor, &e1, &e2, 0.5 * PI, 0.5 * r);
            let trough = rotate_towards(&cell.anchor, &e1, &e2, -0.5 * PI, 0.5 * r);
            (peak, trough, 0.25 * r)
        }
    };
    let up = Bump {
        center: peak,
        radius,
        weight: 1.0,
    };
    let down = Bump {
        center: trough,
        radius,
        weight: 1.0,
    };
    let theta = up.integral(space) / down.integral(space);
    Ok(SharpnessParams {
        cell: j,
        peak,
        trough,
        radius,
        theta,
    })
}

fn params_bumps(p: &SharpnessParams) -> Vec<Bump> {
    vec![
        Bump {
            center: p.peak,
            radius: p.radius,
            weight: 1.0,
        },
        Bump {
            center: p.trough,
            radius: p.radius,
            weight: -p.theta,
        },
    ]
}

/// The mean-zero two-bump function living in cell `j`.
pub fn sharpness_fj(partition: &Partition, j: usize) -> Result<TestFunction> {
    let params = sharpness_params(partition, j)?;
    let mut cells = vec![Vec::new(); partition.len()];
    cells[j] = params_bumps(&params);
    Ok(TestFunction::Bumps { cells })
}

/// Sum of the two-bump functions over all cells.
pub fn sharpness_sum(partition: &Partition) -> Result<TestFunction> {
    let cells = (0..partition.len())
        .map(|j| sharpness_params(partition, j).map(|p| params_bumps(&p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TestFunction::Bumps { cells })
}
