//! Test functions with closed-form integrals.
//!
//! Every function knows its exact integral over the whole space, and, where a
//! closed form exists, over individual partition cells. Reference values are
//! never computed by quadrature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::besov::{besov_norm_bound_chi, SetDescriptor};
use crate::error::{Error, Result};
use crate::partition::{Cell, CellGeometry};
use crate::space::{Point, SpaceDescriptor, SpaceKind};

/// A cone `weight * (1 - dist(x, center)/radius)_+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Point,
    pub radius: f64,
    pub weight: f64,
}

impl Bump {
    #[inline]
    fn eval(&self, space: &SpaceDescriptor, x: &Point) -> f64 {
        let t = space.distance(x, &self.center);
        if t >= self.radius {
            0.0
        } else {
            self.weight * (1.0 - t / self.radius)
        }
    }

    /// Integral of the cone, assuming its support does not wrap onto itself.
    pub fn integral(&self, space: &SpaceDescriptor) -> f64 {
        self.weight * cone_integral(space, self.radius)
    }
}

/// `∫ (1 - dist(x, c)/r)_+ dx`.
pub fn cone_integral(space: &SpaceDescriptor, r: f64) -> f64 {
    match space.kind {
        SpaceKind::Torus => {
            let d = space.d as i32;
            // sup-metric ball of radius s has volume (2s)^d
            2f64.powi(d) * r.powi(d) / (d as f64 + 1.0)
        }
        SpaceKind::Sphere2 => 2.0 * PI * (1.0 - r.sin() / r),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// Torus: the coordinate `x_axis ∈ [0, 1)` (jumps at 0). Sphere: the
    /// Cartesian coordinate of the embedding.
    Coordinate {
        axis: usize,
    },
    ConeBump {
        center: Point,
        radius: f64,
        height: f64,
    },
    Indicator {
        set: SetDescriptor,
    },
    /// `cos(2π k·x)` on the torus.
    Cosine {
        freq: Vec<i64>,
    },
    /// `Σ_k c_k z^k` on the sphere.
    ZonalPolynomial {
        coeffs: Vec<f64>,
    },
    /// `±1` on `T^1`, alternating on intervals of length `1/(2 freq)`,
    /// starting with `+1` on `[0, 1/(2 freq))`.
    SquareWave {
        freq: usize,
    },
    /// Disjoint cones grouped by the partition cell containing them.
    Bumps {
        cells: Vec<Vec<Bump>>,
    },
    Combination {
        terms: Vec<(f64, TestFunction)>,
    },
}

impl TestFunction {
    pub fn constant(value: f64) -> Self {
        TestFunction::Constant { value }
    }

    pub fn indicator(set: SetDescriptor) -> Self {
        TestFunction::Indicator { set }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Constant { .. } => "constant",
            TestFunction::Coordinate { .. } => "coordinate",
            TestFunction::ConeBump { .. } => "cone_bump",
            TestFunction::Indicator { .. } => "indicator",
            TestFunction::Cosine { .. } => "cosine",
            TestFunction::ZonalPolynomial { .. } => "zonal_polynomial",
            TestFunction::SquareWave { .. } => "square_wave",
            TestFunction::Bumps { .. } => "bumps",
            TestFunction::Combination { .. } => "combination",
        }
    }

    /// Checks that the function is defined on `space`.
    pub fn check_space(&self, space: &SpaceDescriptor) -> Result<()> {
        let bad = |what: &str| Err(Error::UnsupportedSpace(format!("{what} on {}", space.kind)));
        match self {
            TestFunction::Coordinate { axis } if *axis >= space.ambient_dim() => {
                Err(Error::InvalidArgument(format!("coordinate axis {axis} out of range")))
            }
            TestFunction::Cosine { freq } => {
                if space.kind != SpaceKind::Torus {
                    bad("cosine")
                } else if freq.len() != space.d {
                    Err(Error::InvalidArgument("cosine frequency has wrong length".into()))
                } else {
                    Ok(())
                }
            }
            TestFunction::ZonalPolynomial { .. } if space.kind != SpaceKind::Sphere2 => {
                bad("zonal polynomial")
            }
            TestFunction::SquareWave { freq } => {
                if space.kind != SpaceKind::Torus || space.d != 1 {
                    bad("square wave")
                } else if *freq == 0 {
                    Err(Error::InvalidArgument("square wave frequency must be positive".into()))
                } else {
                    Ok(())
                }
            }
            TestFunction::ConeBump { radius, .. } if *radius <= 0.0 => {
                Err(Error::InvalidArgument("cone radius must be positive".into()))
            }
            TestFunction::Indicator { set } => set.check_space(space),
            TestFunction::Combination { terms } => {
                terms.iter().try_for_each(|(_, f)| f.check_space(space))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, space: &SpaceDescriptor, x: &Point) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Coordinate { axis } => x.x(*axis),
            TestFunction::ConeBump {
                center,
                radius,
                height,
            } => Bump {
                center: *center,
                radius: *radius,
                weight: *height,
            }
            .eval(space, x),
            TestFunction::Indicator { set } => {
                if set.contains(x) {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Cosine { freq } => {
                let phase: f64 = freq.iter().zip(x.coords()).map(|(&k, &c)| k as f64 * c).sum();
                (2.0 * PI * phase).cos()
            }
            TestFunction::ZonalPolynomial { coeffs } => horner(coeffs, x.x(2)),
            TestFunction::SquareWave { freq } => {
                let k = (x.x(0) * 2.0 * *freq as f64).floor() as i64;
                if k.rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            TestFunction::Bumps { cells } => cells.iter().flatten().map(|b| b.eval(space, x)).sum(),
            TestFunction::Combination { terms } => {
                terms.iter().map(|(a, f)| a * f.eval(space, x)).sum()
            }
        }
    }

    /// `eval` for a point known to lie in cell `cell_id`; O(1) for bump sums.
    #[inline]
    pub fn eval_in_cell(&self, space: &SpaceDescriptor, x: &Point, cell_id: usize) -> f64 {
        match self {
            TestFunction::Bumps { cells } => cells
                .get(cell_id)
                .map_or(0.0, |bs| bs.iter().map(|b| b.eval(space, x)).sum()),
            TestFunction::Combination { terms } => terms
                .iter()
                .map(|(a, f)| a * f.eval_in_cell(space, x, cell_id))
                .sum(),
            _ => self.eval(space, x),
        }
    }

    /// `∫_M f`.
    pub fn exact_integral(&self, space: &SpaceDescriptor) -> Result<f64> {
        self.check_space(space)?;
        let m = space.total_measure;
        Ok(match self {
            TestFunction::Constant { value } => value * m,
            TestFunction::Coordinate { .. } => match space.kind {
                SpaceKind::Torus => 0.5,
                SpaceKind::Sphere2 => 0.0,
            },
            TestFunction::ConeBump { radius, height, .. } => height * cone_integral(space, *radius),
            TestFunction::Indicator { set } => set.measure(),
            TestFunction::Cosine { freq } => {
                if freq.iter().all(|&k| k == 0) {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::ZonalPolynomial { coeffs } => {
                2.0 * PI * poly_antiderivative_diff(coeffs, -1.0, 1.0)
            }
            TestFunction::SquareWave { .. } => 0.0,
            TestFunction::Bumps { cells } => cells.iter().flatten().map(|b| b.integral(space)).sum(),
            TestFunction::Combination { terms } => {
                let mut s = 0.0;
                for (a, f) in terms {
                    s += a * f.exact_integral(space)?;
                }
                s
            }
        })
    }

    /// `∫_{cell} f`, when a closed form is available.
    pub fn cell_integral(&self, space: &SpaceDescriptor, cell: &Cell) -> Option<f64> {
        let w = cell.measure;
        match (self, &cell.geometry) {
            (TestFunction::Constant { value }, _) => Some(value * w),
            (TestFunction::Coordinate { axis }, CellGeometry::TorusBox { lo, hi }) => {
                Some(w * 0.5 * (lo[*axis] + hi[*axis]))
            }
            (TestFunction::Coordinate { axis }, zone @ CellGeometry::SphereZone { .. }) => {
                let (z_lo, z_hi, phi_lo, phi_hi) = zone_bounds(zone);
                let root = |z: f64| 0.5 * (z * (1.0 - z * z).max(0.0).sqrt() + z.clamp(-1.0, 1.0).asin());
                let band = root(z_hi) - root(z_lo);
                Some(match axis {
                    0 => band * (phi_hi.sin() - phi_lo.sin()),
                    1 => band * (phi_lo.cos() - phi_hi.cos()),
                    _ => (phi_hi - phi_lo) * 0.5 * (z_hi * z_hi - z_lo * z_lo),
                })
            }
            (TestFunction::Cosine { freq }, CellGeometry::TorusBox { lo, hi }) => {
                // Real part of Π_i ∫ exp(2πi k_i x) dx.
                let (mut re, mut im) = (1.0, 0.0);
                for ((&k, &l), &h) in freq.iter().zip(lo).zip(hi) {
                    let (fr, fi) = if k == 0 {
                        (h - l, 0.0)
                    } else {
                        let a = 2.0 * PI * k as f64;
                        // (e^{iah} - e^{ial}) / (ia)
                        ((a * h).sin() - (a * l).sin(), (a * l).cos() - (a * h).cos())
                    };
                    let scale = if k == 0 { 1.0 } else { 1.0 / (2.0 * PI * k as f64) };
                    let (fr, fi) = (fr * scale, fi * scale);
                    let nr = re * fr - im * fi;
                    im = re * fi + im * fr;
                    re = nr;
                }
                Some(re)
            }
            (TestFunction::ZonalPolynomial { coeffs }, zone @ CellGeometry::SphereZone { .. }) => {
                let (z_lo, z_hi, phi_lo, phi_hi) = zone_bounds(zone);
                Some((phi_hi - phi_lo) * poly_antiderivative_diff(coeffs, z_lo, z_hi))
            }
            (TestFunction::SquareWave { freq }, CellGeometry::TorusBox { lo, hi }) => {
                let f2 = 2.0 * *freq as f64;
                let g = |x: f64| {
                    let u = x * f2;
                    let k = u.floor() as i64;
                    let frac = u - k as f64;
                    if k.rem_euclid(2) == 0 {
                        frac / f2
                    } else {
                        (1.0 - frac) / f2
                    }
                };
                Some(g(hi[0]) - g(lo[0]))
            }
            (TestFunction::Indicator { set }, _) => set.cell_overlap(space, cell),
            (
                TestFunction::ConeBump {
                    center,
                    radius,
                    height,
                },
                geom,
            ) => {
                if cell.distance_to(space, center) >= *radius {
                    return Some(0.0);
                }
                match geom {
                    CellGeometry::TorusBox { lo, hi } if space.d == 1 => {
                        Some(height * tent_integral(center.x(0), *radius, lo[0], hi[0]))
                    }
                    CellGeometry::TorusBox { lo, hi } => {
                        let inside = (0..space.d).all(|i| {
                            let c = center.x(i);
                            c - radius >= lo[i] && c + radius <= hi[i]
                        });
                        inside.then(|| height * cone_integral(space, *radius))
                    }
                    _ => None,
                }
            }
            (TestFunction::Bumps { cells }, _) => Some(
                cells
                    .get(cell.id)
                    .map_or(0.0, |bs| bs.iter().map(|b| b.integral(space)).sum()),
            ),
            (TestFunction::Combination { terms }, _) => {
                let mut s = 0.0;
                for (a, f) in terms {
                    s += a * f.cell_integral(space, cell)?;
                }
                Some(s)
            }
            _ => None,
        }
    }

    /// `sup |f|`.
    pub fn sup_abs(&self) -> f64 {
        match self {
            TestFunction::Constant { value } => value.abs(),
            TestFunction::Coordinate { .. } => 1.0,
            TestFunction::ConeBump { height, .. } => height.abs(),
            TestFunction::Indicator { .. } | TestFunction::Cosine { .. } | TestFunction::SquareWave { .. } => 1.0,
            TestFunction::ZonalPolynomial { coeffs } => coeffs.iter().map(|c| c.abs()).sum(),
            TestFunction::Bumps { cells } => cells.iter().flatten().map(|b| b.weight.abs()).fold(0.0, f64::max),
            TestFunction::Combination { terms } => terms.iter().map(|(a, f)| a.abs() * f.sup_abs()).sum(),
        }
    }

    /// Lipschitz constant with respect to the space metric, if finite.
    pub fn lipschitz(&self, space: &SpaceDescriptor) -> Option<f64> {
        match self {
            TestFunction::Constant { .. } => Some(0.0),
            TestFunction::Coordinate { .. } => match space.kind {
                SpaceKind::Torus => None,
                // chordal distance never exceeds geodesic distance
                SpaceKind::Sphere2 => Some(1.0),
            },
            TestFunction::ConeBump { radius, height, .. } => Some(height.abs() / radius),
            TestFunction::Cosine { freq } => Some(2.0 * PI * freq.iter().map(|k| k.abs() as f64).sum::<f64>()),
            TestFunction::ZonalPolynomial { coeffs } => Some(
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| k as f64 * c.abs())
                    .sum(),
            ),
            TestFunction::Indicator { .. } | TestFunction::SquareWave { .. } => None,
            // Disjoint cones in a geodesic space: the steepest cone dominates.
            TestFunction::Bumps { cells } => Some(
                cells
                    .iter()
                    .flatten()
                    .map(|b| b.weight.abs() / b.radius)
                    .fold(0.0, f64::max),
            ),
            TestFunction::Combination { terms } => {
                let mut s = 0.0;
                for (a, f) in terms {
                    s += a.abs() * f.lipschitz(space)?;
                }
                Some(s)
            }
        }
    }

    /// Certified upper bound on the `B^{t^alpha}_{p,∞}` norm, from an explicit
    /// φ-gradient: constant gradients for Lipschitz functions, inner-tube
    /// gradients for indicators.
    pub fn besov_bound(&self, space: &SpaceDescriptor, alpha: f64, p: f64) -> Option<f64> {
        if let TestFunction::Indicator { set } = self {
            return besov_norm_bound_chi(space, set, alpha, p)
                .ok()
                .filter(|b| b.warning.is_none())
                .map(|b| b.value);
        }
        if alpha > 1.0 {
            return None;
        }
        let l = self.lipschitz(space)?;
        Some(lipschitz_gradient_level(l, self.sup_abs(), alpha) * space.total_measure.powf(1.0 / p))
    }
}

/// Smallest constant `g` with `min(L h, 2S) <= h^alpha (g + g)` for all
/// `h > 0`; maximized at `h = 2S/L`.
pub fn lipschitz_gradient_level(l: f64, s: f64, alpha: f64) -> f64 {
    if l == 0.0 || s == 0.0 {
        return 0.0;
    }
    0.5 * l.powf(alpha) * (2.0 * s).powf(1.0 - alpha)
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

/// `∫_a^b Σ c_k z^k dz`.
fn poly_antiderivative_diff(coeffs: &[f64], a: f64, b: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let e = k as i32 + 1;
            c * (b.powi(e) - a.powi(e)) / e as f64
        })
        .sum()
}

fn zone_bounds(zone: &CellGeometry) -> (f64, f64, f64, f64) {
    match zone {
        CellGeometry::SphereZone {
            theta_lo,
            theta_hi,
            phi_lo,
            phi_hi,
        } => (theta_hi.cos(), theta_lo.cos(), *phi_lo, *phi_hi),
        CellGeometry::TorusBox { .. } => unreachable!("zone_bounds on a torus box"),
    }
}

/// `∫_a^b (1 - |x - c|/r)_+ dx` on the circle `R/Z`, for `r <= 1/2` and
/// `0 <= a <= b <= 1`.
fn tent_integral(c: f64, r: f64, a: f64, b: f64) -> f64 {
    let cdf = |u: f64| -> f64 {
        if u <= -r {
            0.0
        } else if u < 0.0 {
            (u + r).powi(2) / (2.0 * r)
        } else if u < r {
            r - (r - u).powi(2) / (2.0 * r)
        } else {
            r
        }
    };
    [-1.0, 0.0, 1.0]
        .iter()
        .map(|s| {
            let cc = c + s;
            cdf(b - cc) - cdf(a - cc)
        })
        .sum()
}
