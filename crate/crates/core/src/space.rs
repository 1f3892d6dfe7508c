//! Metric measure spaces: the flat torus with the wraparound sup-metric and
//! the unit 2-sphere with the geodesic metric.

use std::f64::consts::PI;
use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Largest torus dimension backed by the inline point representation.
pub const MAX_TORUS_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Torus,
    Sphere2,
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceKind::Torus => f.write_str("torus"),
            SpaceKind::Sphere2 => f.write_str("sphere2"),
        }
    }
}

impl std::str::FromStr for SpaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "torus" => Ok(SpaceKind::Torus),
            "sphere2" | "sphere" => Ok(SpaceKind::Sphere2),
            other => Err(Error::UnsupportedSpace(other.to_string())),
        }
    }
}

/// A point of `T^d` (coordinates in `[0,1)`) or of `S^2` (unit vector).
///
/// Only the first `dim` coordinates are meaningful.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    c: [f64; 3],
    dim: u8,
}

impl Point {
    pub fn torus(coords: &[f64]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_TORUS_DIM,
            "torus points have 1..={MAX_TORUS_DIM} coordinates"
        );
        let mut c = [0.0; 3];
        for (dst, &x) in c.iter_mut().zip(coords) {
            *dst = wrap_unit(x);
        }
        Self {
            c,
            dim: coords.len() as u8,
        }
    }

    /// Unit vector; the input is normalized.
    pub fn sphere(x: f64, y: f64, z: f64) -> Self {
        let n = (x * x + y * y + z * z).sqrt();
        Self {
            c: [x / n, y / n, z / n],
            dim: 3,
        }
    }

    /// Sphere point from colatitude `theta` and longitude `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self {
            c: [st * cp, st * sp, ct],
            dim: 3,
        }
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.c[i]
    }

    /// Colatitude in `[0, pi]` of a sphere point.
    pub fn colatitude(&self) -> f64 {
        let r = self.c[0].hypot(self.c[1]);
        r.atan2(self.c[2])
    }

    /// Longitude in `[0, 2pi)` of a sphere point.
    pub fn longitude(&self) -> f64 {
        let mut phi = self.c[1].atan2(self.c[0]);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        if phi >= 2.0 * PI {
            phi = 0.0;
        }
        phi
    }

    pub(crate) fn raw(c: [f64; 3], dim: usize) -> Self {
        Self { c, dim: dim as u8 }
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coords()).finish()
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.dim()))?;
        for x in self.coords() {
            seq.serialize_element(x)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PointVisitor;

        impl<'de> Visitor<'de> for PointVisitor {
            type Value = Point;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array of 1 to 3 coordinates")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Point, A::Error> {
                let mut c = [0.0; 3];
                let mut n = 0;
                while let Some(x) = seq.next_element::<f64>()? {
                    if n == 3 {
                        return Err(de::Error::invalid_length(4, &self));
                    }
                    c[n] = x;
                    n += 1;
                }
                if n == 0 {
                    return Err(de::Error::invalid_length(0, &self));
                }
                Ok(Point::raw(c, n))
            }
        }

        deserializer.deserialize_seq(PointVisitor)
    }
}

#[inline]
fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Wraparound distance between two coordinates of the unit circle.
#[inline]
pub fn wrap_diff(a: f64, b: f64) -> f64 {
    let t = (a - b).rem_euclid(1.0);
    t.min(1.0 - t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    pub kind: SpaceKind,
    pub d: usize,
    pub total_measure: f64,
    pub ahlfors_h: f64,
    pub ahlfors_k: f64,
}

/// Builds the descriptor with closed-form measure and Ahlfors constants.
///
/// Torus (sup-metric): balls of radius `r < 1/2` are cubes of side `2r`, so
/// `H = K = 2^d`. Sphere: `2pi(1 - cos r) / r^2` decreases from `pi` at
/// `r -> 0` to `4/pi` at `r = pi`.
pub fn make_space(kind: SpaceKind, d: usize) -> Result<SpaceDescriptor> {
    match kind {
        SpaceKind::Torus => {
            if d == 0 || d > MAX_TORUS_DIM {
                return Err(Error::UnsupportedSpace(format!(
                    "torus dimension {d} (supported: 1..={MAX_TORUS_DIM})"
                )));
            }
            let c = 2f64.powi(d as i32);
            Ok(SpaceDescriptor {
                kind,
                d,
                total_measure: 1.0,
                ahlfors_h: c,
                ahlfors_k: c,
            })
        }
        SpaceKind::Sphere2 => {
            if d != 2 {
                return Err(Error::UnsupportedSpace(format!(
                    "sphere2 has dimension 2, got {d}"
                )));
            }
            Ok(SpaceDescriptor {
                kind,
                d: 2,
                total_measure: 4.0 * PI,
                ahlfors_h: 4.0 / PI,
                ahlfors_k: PI,
            })
        }
    }
}

impl SpaceDescriptor {
    pub fn torus(d: usize) -> Result<Self> {
        make_space(SpaceKind::Torus, d)
    }

    pub fn sphere2() -> Self {
        make_space(SpaceKind::Sphere2, 2).expect("sphere2 is always supported")
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            SpaceKind::Torus => 0.5,
            SpaceKind::Sphere2 => PI,
        }
    }

    /// Coordinate dimension of stored points (`d` on the torus, 3 on the sphere).
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            SpaceKind::Torus => self.d,
            SpaceKind::Sphere2 => 3,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        match self.kind {
            SpaceKind::Torus => {
                p.dim() == self.d && p.coords().iter().all(|x| (0.0..1.0).contains(x))
            }
            SpaceKind::Sphere2 => {
                let c = p.coords();
                p.dim() == 3 && ((c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() - 1.0).abs() < 1e-12
            }
        }
    }

    #[inline]
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        match self.kind {
            SpaceKind::Torus => {
                let mut m: f64 = 0.0;
                for i in 0..self.d {
                    m = m.max(wrap_diff(a.c[i], b.c[i]));
                }
                m
            }
            SpaceKind::Sphere2 => {
                // atan2 form: accurate at small and near-antipodal angles, and
                // always inside [0, pi].
                let (u, v) = (&a.c, &b.c);
                let cx = u[1] * v[2] - u[2] * v[1];
                let cy = u[2] * v[0] - u[0] * v[2];
                let cz = u[0] * v[1] - u[1] * v[0];
                let cross = (cx * cx + cy * cy + cz * cz).sqrt();
                let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
                cross.atan2(dot)
            }
        }
    }

    pub fn ball_measure(&self, _center: &Point, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::InvalidArgument(format!("ball radius {r} < 0")));
        }
        Ok(self.ball_measure_radius(r))
    }

    /// Ball measure as a function of the radius only (both spaces are homogeneous).
    pub fn ball_measure_radius(&self, r: f64) -> f64 {
        match self.kind {
            SpaceKind::Torus => (2.0 * r).min(1.0).powi(self.d as i32),
            SpaceKind::Sphere2 => 2.0 * PI * (1.0 - r.min(PI).cos()),
        }
    }

    pub fn sample_uniform(&self, rng: &mut StreamRng) -> Point {
        match self.kind {
            SpaceKind::Torus => {
                let mut c = [0.0; 3];
                for x in c.iter_mut().take(self.d) {
                    *x = rng.uniform();
                }
                Point::raw(c, self.d)
            }
            SpaceKind::Sphere2 => {
                let z = 2.0 * rng.uniform() - 1.0;
                let phi = 2.0 * PI * rng.uniform();
                let r = (1.0 - z * z).max(0.0).sqrt();
                Point::raw([r * phi.cos(), r * phi.sin(), z], 3)
            }
        }
    }

    /// A point at distance exactly `r` from `x` in a uniformly random direction.
    ///
    /// Requires `r < diameter / 2` on the torus so the wraparound does not fold.
    pub fn offset_point(&self, x: &Point, r: f64, rng: &mut StreamRng) -> Point {
        match self.kind {
            SpaceKind::Torus => {
                // Uniform point on the sup-norm sphere of radius r: pick the face
                // coordinate and sign, then uniform coordinates on that face.
                let face = rng.index(self.d);
                let mut c = x.c;
                for (i, ci) in c.iter_mut().enumerate().take(self.d) {
                    let delta = if i == face {
                        if rng.uniform() < 0.5 {
                            r
                        } else {
                            -r
                        }
                    } else {
                        r * (2.0 * rng.uniform() - 1.0)
                    };
                    *ci = wrap_unit(*ci + delta);
                }
                Point::raw(c, self.d)
            }
            SpaceKind::Sphere2 => {
                let (e1, e2) = tangent_frame(x);
                let psi = 2.0 * PI * rng.uniform();
                rotate_towards(x, &e1, &e2, psi, r)
            }
        }
    }
}

/// Orthonormal tangent frame `(e_theta, e_phi)` at a sphere point, with a
/// fixed fallback at the poles.
pub(crate) fn tangent_frame(x: &Point) -> ([f64; 3], [f64; 3]) {
    let c = &x.c;
    let rho = c[0].hypot(c[1]);
    if rho < 1e-12 {
        let s = c[2].signum();
        return ([s, 0.0, 0.0], [0.0, 1.0, 0.0]);
    }
    let (cp, sp) = (c[0] / rho, c[1] / rho);
    let e_theta = [c[2] * cp, c[2] * sp, -rho];
    let e_phi = [-sp, cp, 0.0];
    (e_theta, e_phi)
}

/// Moves `x` a geodesic distance `r` along the tangent direction
/// `cos(psi) e1 + sin(psi) e2`.
pub(crate) fn rotate_towards(x: &Point, e1: &[f64; 3], e2: &[f64; 3], psi: f64, r: f64) -> Point {
    let (sp, cp) = psi.sin_cos();
    let (sr, cr) = r.sin_cos();
    let mut v = [0.0; 3];
    for i in 0..3 {
        let t = cp * e1[i] + sp * e2[i];
        v[i] = cr * x.c[i] + sr * t;
    }
    Point::sphere(v[0], v[1], v[2])
}
