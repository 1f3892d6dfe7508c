//! Equal-measure, diameter-bounded partitions.
//!
//! The torus is cut into `m^d` half-open boxes. The sphere uses a zonal
//! equal-area scheme: two polar caps, then collars of equal-longitude
//! sectors. Collar boundaries are placed where the enclosed cap area is an
//! exact multiple of `4pi/N`, so every cell has area exactly `4pi/N` up to
//! rounding.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{tag, StreamRng};
use crate::space::{wrap_diff, Point, SpaceDescriptor, SpaceKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CellGeometry {
    /// Half-open box `[lo_i, hi_i)` per coordinate.
    TorusBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Colatitude interval and longitude interval `[phi_lo, phi_hi)`.
    SphereZone {
        theta_lo: f64,
        theta_hi: f64,
        phi_lo: f64,
        phi_hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub measure: f64,
    /// Closed-form upper bound on the diameter.
    pub diameter: f64,
    pub anchor: Point,
    pub geometry: CellGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub space: SpaceDescriptor,
    #[serde(rename = "N")]
    pub n: usize,
    pub cells: Vec<Cell>,
}

impl Cell {
    pub fn contains(&self, p: &Point) -> bool {
        match &self.geometry {
            CellGeometry::TorusBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(p.coords())
                .all(|((&l, &h), &x)| l <= x && x < h),
            CellGeometry::SphereZone {
                theta_lo,
                theta_hi,
                phi_lo,
                phi_hi,
            } => {
                let z = p.x(2);
                let z_hi = theta_lo.cos();
                let z_lo = theta_hi.cos();
                // (z_lo, z_hi], with the south pole closed.
                let in_band = z <= z_hi && (z > z_lo || (*theta_hi >= PI && z >= -1.0));
                if !in_band {
                    return false;
                }
                if *phi_lo == 0.0 && *phi_hi >= 2.0 * PI {
                    return true;
                }
                let phi = p.longitude();
                *phi_lo <= phi && phi < *phi_hi
            }
        }
    }

    /// Uniform sample from the measure restricted to the cell.
    pub fn sample(&self, rng: &mut StreamRng) -> Point {
        match &self.geometry {
            CellGeometry::TorusBox { lo, hi } => {
                let mut c = [0.0; 3];
                for (i, (&l, &h)) in lo.iter().zip(hi).enumerate() {
                    let mut x = l + rng.uniform() * (h - l);
                    if x >= h {
                        x = l;
                    }
                    c[i] = x;
                }
                Point::raw(c, lo.len())
            }
            CellGeometry::SphereZone {
                theta_lo,
                theta_hi,
                phi_lo,
                phi_hi,
            } => {
                // Inverse CDF: area element is uniform in z = cos(theta).
                let z_hi = theta_lo.cos();
                let z_lo = theta_hi.cos();
                let z = z_lo + (z_hi - z_lo) * (1.0 - rng.uniform());
                let phi = phi_lo + (phi_hi - phi_lo) * rng.uniform();
                let r = (1.0 - z * z).max(0.0).sqrt();
                Point::raw([r * phi.cos(), r * phi.sin(), z], 3)
            }
        }
    }

    /// Measure computed from the geometry (independent of the stored `measure`).
    pub fn geometric_measure(&self) -> f64 {
        match &self.geometry {
            CellGeometry::TorusBox { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
            CellGeometry::SphereZone {
                theta_lo,
                theta_hi,
                phi_lo,
                phi_hi,
            } => (phi_hi - phi_lo) * (theta_lo.cos() - theta_hi.cos()),
        }
    }

    /// Radius of the largest ball around the anchor contained in the cell.
    pub fn inradius(&self) -> f64 {
        match &self.geometry {
            CellGeometry::TorusBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| 0.5 * (h - l))
                .fold(f64::INFINITY, f64::min),
            CellGeometry::SphereZone {
                theta_lo,
                theta_hi,
                phi_lo,
                phi_hi,
            } => {
                let theta_a = self.anchor.colatitude();
                if *theta_lo <= 0.0 {
                    return *theta_hi;
                }
                if *theta_hi >= PI {
                    return PI - theta_lo;
                }
                let mut r = (theta_a - theta_lo).min(theta_hi - theta_a);
                let dphi = phi_hi - phi_lo;
                if dphi < 2.0 * PI {
                    // Distance to a meridian half-plane at longitude offset dphi/2.
                    let half = (0.5 * dphi).min(0.5 * PI);
                    r = r.min((theta_a.sin() * half.sin()).asin());
                }
                r
            }
        }
    }

    /// Distance from `y` to the cell (zero inside).
    pub fn distance_to(&self, space: &SpaceDescriptor, y: &Point) -> f64 {
        match &self.geometry {
            CellGeometry::TorusBox { lo, hi } => {
                let mut m: f64 = 0.0;
                for (i, (&l, &h)) in lo.iter().zip(hi).enumerate() {
                    let x = y.x(i);
                    let di = if l <= x && x < h {
                        0.0
                    } else {
                        wrap_diff(x, l).min(wrap_diff(x, h))
                    };
                    m = m.max(di);
                }
                m
            }
            CellGeometry::SphereZone {
                theta_lo,
                theta_hi,
                phi_lo,
                phi_hi,
            } => {
                let theta = y.colatitude();
                let full = *phi_lo == 0.0 && *phi_hi >= 2.0 * PI;
                let phi = y.longitude();
                if full || (*phi_lo <= phi && phi < *phi_hi) {
                    return (theta_lo - theta).max(theta - theta_hi).max(0.0);
                }
                let edge = |phi_e: f64| -> f64 {
                    let delta = phi - phi_e;
                    let foot = (theta.sin() * delta.cos()).atan2(theta.cos());
                    let candidates = [foot.clamp(*theta_lo, *theta_hi), *theta_lo, *theta_hi];
                    candidates
                        .iter()
                        .map(|&t| space.distance(y, &Point::from_angles(t, phi_e)))
                        .fold(f64::INFINITY, f64::min)
                };
                edge(*phi_lo).min(edge(*phi_hi))
            }
        }
    }
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn max_diameter(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    /// Index of the cell containing `p`, by exhaustive search.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(p))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Partition = serde_json::from_str(s)?;
        if p.n != p.cells.len() {
            return Err(Error::InvalidArgument(format!(
                "partition declares N = {} but has {} cells",
                p.n,
                p.cells.len()
            )));
        }
        Ok(p)
    }

    /// Same partition with the cells listed in another order (ids follow the cells).
    pub fn permuted(&self, order: &[usize]) -> Partition {
        let cells = order.iter().map(|&i| self.cells[i].clone()).collect();
        Partition {
            space: self.space,
            n: self.n,
            cells,
        }
    }
}

/// `m^d` congruent half-open boxes of side `1/m`.
pub fn torus_grid_partition(space: &SpaceDescriptor, m: usize) -> Result<Partition> {
    if space.kind != SpaceKind::Torus {
        return Err(Error::UnsupportedSpace("torus grid requires a torus".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("grid resolution m must be positive".into()));
    }
    let d = space.d;
    let n = m.pow(d as u32);
    let side = 1.0 / m as f64;
    let measure = 1.0 / n as f64;
    let edge = |k: usize| k as f64 / m as f64;
    let mut cells = Vec::with_capacity(n);
    for id in 0..n {
        let mut rem = id;
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        let mut anchor = [0.0; 3];
        for a in anchor.iter_mut().take(d) {
            let k = rem % m;
            rem /= m;
            lo.push(edge(k));
            hi.push(edge(k + 1));
            *a = (k as f64 + 0.5) / m as f64;
        }
        cells.push(Cell {
            id,
            measure,
            // The sup-metric diameter of a box of side 1/m, capped by diam(T^d).
            diameter: side.min(0.5),
            anchor: Point::raw(anchor, d),
            geometry: CellGeometry::TorusBox { lo, hi },
        });
    }
    Ok(Partition {
        space: *space,
        n,
        cells,
    })
}

/// Torus grid with `n` cells; `n` must be a perfect `d`-th power.
pub fn torus_partition_with_cells(space: &SpaceDescriptor, n: usize) -> Result<Partition> {
    let m = (n as f64).powf(1.0 / space.d as f64).round() as usize;
    if m == 0 || m.pow(space.d as u32) != n {
        return Err(Error::InvalidArgument(format!(
            "N = {n} is not a perfect power of the torus dimension {}",
            space.d
        )));
    }
    torus_grid_partition(space, m)
}

/// Colatitude whose polar cap has `k` cells' worth of area.
fn cap_colatitude(k: usize, n: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k >= n {
        return PI;
    }
    // 2pi(1 - cos t) = 4pi k / n  <=>  sin(t/2) = sqrt(k/n)
    2.0 * (k as f64 / n as f64).sqrt().asin()
}

/// Zonal equal-area partition of `S^2` into `n` cells.
pub fn sphere_zonal_partition(space: &SpaceDescriptor, n: usize) -> Result<Partition> {
    if space.kind != SpaceKind::Sphere2 {
        return Err(Error::UnsupportedSpace("zonal partition requires sphere2".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("zonal partition needs N >= 2, got {n}")));
    }
    let measure = 4.0 * PI / n as f64;
    let mut counts = Vec::new();
    if n > 2 {
        let theta_c = cap_colatitude(1, n);
        let ideal_angle = measure.sqrt();
        let n_collars = (((PI - 2.0 * theta_c) / ideal_angle).round() as usize).max(1);
        let fit_angle = (PI - 2.0 * theta_c) / n_collars as f64;
        let mut carry = 0.0;
        for i in 0..n_collars {
            let a = theta_c + i as f64 * fit_angle;
            let b = a + fit_angle;
            let ideal = 2.0 * PI * (a.cos() - b.cos()) / measure;
            let k = (ideal + carry).round().max(0.0);
            carry += ideal - k;
            if k > 0.0 {
                counts.push(k as usize);
            }
        }
        // Rounding with carry preserves the integer total up to float noise.
        let total: usize = counts.iter().sum();
        let want = n - 2;
        if total != want {
            let last = counts.last_mut().expect("at least one collar");
            *last = (*last + want).checked_sub(total).filter(|&k| k > 0).ok_or_else(|| {
                Error::InvalidArgument(format!("collar rounding failed for N = {n}"))
            })?;
        }
    }

    let mut cells = Vec::with_capacity(n);
    let north_pole = Point::sphere(0.0, 0.0, 1.0);
    let south_pole = Point::sphere(0.0, 0.0, -1.0);
    let theta_c = cap_colatitude(1, n);
    cells.push(Cell {
        id: 0,
        measure,
        diameter: (2.0 * theta_c).min(PI),
        anchor: north_pole,
        geometry: CellGeometry::SphereZone {
            theta_lo: 0.0,
            theta_hi: theta_c,
            phi_lo: 0.0,
            phi_hi: 2.0 * PI,
        },
    });
    let mut enclosed = 1;
    for &k in &counts {
        let theta_lo = cap_colatitude(enclosed, n);
        let theta_hi = cap_colatitude(enclosed + k, n);
        enclosed += k;
        let theta_mid = 0.5 * (theta_lo + theta_hi);
        for s in 0..k {
            let phi_lo = 2.0 * PI * s as f64 / k as f64;
            let phi_hi = 2.0 * PI * (s + 1) as f64 / k as f64;
            cells.push(Cell {
                id: cells.len(),
                measure,
                diameter: zone_diameter_bound(theta_lo, theta_hi, phi_hi - phi_lo),
                anchor: Point::from_angles(theta_mid, 0.5 * (phi_lo + phi_hi)),
                geometry: CellGeometry::SphereZone {
                    theta_lo,
                    theta_hi,
                    phi_lo,
                    phi_hi,
                },
            });
        }
    }
    let theta_s = cap_colatitude(n - 1, n);
    cells.push(Cell {
        id: cells.len(),
        measure,
        diameter: (2.0 * (PI - theta_s)).min(PI),
        anchor: south_pole,
        geometry: CellGeometry::SphereZone {
            theta_lo: theta_s,
            theta_hi: PI,
            phi_lo: 0.0,
            phi_hi: 2.0 * PI,
        },
    });
    debug_assert_eq!(cells.len(), n);
    Ok(Partition {
        space: *space,
        n,
        cells,
    })
}

/// Upper bound on the geodesic diameter of a zone sector.
///
/// Any two points are joined by a meridian arc (length at most
/// `theta_hi - theta_lo`) followed by a parallel arc, whose length bounds
/// the geodesic and is at most `min(dphi, pi) * max sin(theta)`.
fn zone_diameter_bound(theta_lo: f64, theta_hi: f64, dphi: f64) -> f64 {
    let max_sin = if theta_lo <= 0.5 * PI && theta_hi >= 0.5 * PI {
        1.0
    } else {
        theta_lo.sin().max(theta_hi.sin())
    };
    ((theta_hi - theta_lo) + dphi.min(PI) * max_sin).min(PI)
}

/// Builds the natural partition of `space` with `n` cells.
pub fn build_partition(space: &SpaceDescriptor, n: usize) -> Result<Partition> {
    match space.kind {
        SpaceKind::Torus => torus_partition_with_cells(space, n),
        SpaceKind::Sphere2 => sphere_zonal_partition(space, n),
    }
}

/// Uniform point of the cell.
pub fn cell_sample(cell: &Cell, rng: &mut StreamRng) -> Point {
    cell.sample(rng)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionReport {
    pub n: usize,
    /// `|sum_j omega_j - |M|| / |M|`.
    pub measure_sum_residual: f64,
    /// Largest relative gap between stored and geometric cell measure.
    pub max_measure_residual: f64,
    /// Samples lying in zero or in several cells.
    pub coverage_violations: usize,
    /// Sampled pairs farther apart than the cell's diameter bound.
    pub diameter_violations: usize,
    /// Points of the ball of radius `inradius` about the anchor found outside the cell.
    pub inner_ball_violations: usize,
    pub scaled_diameter_min: f64,
    pub scaled_diameter_max: f64,
    /// `min_j inradius_j * N^{1/d}`.
    pub c1: f64,
    /// `max` over samples of `dist(x, anchor) * N^{1/d}`.
    pub c2: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Empirical check of equal measure, coverage/disjointness, diameter bounds
/// and the inner/outer ball sandwich around the anchors.
pub fn verify_partition(partition: &Partition, sample_budget: usize, seed: u64) -> PartitionReport {
    use rayon::prelude::*;

    let space = &partition.space;
    let n = partition.cells.len();
    let scale = (n as f64).powf(1.0 / space.d as f64);
    let total: f64 = partition.cells.iter().map(|c| c.measure).sum();
    let measure_sum_residual = (total - space.total_measure).abs() / space.total_measure;
    let max_measure_residual = partition
        .cells
        .iter()
        .map(|c| {
            let want = space.total_measure / n as f64;
            ((c.measure - want).abs() / want).max((c.geometric_measure() - c.measure).abs() / c.measure)
        })
        .fold(0.0, f64::max);

    const CHUNK: usize = 4096;
    let n_chunks = sample_budget.div_ceil(CHUNK);
    let (coverage_violations, c2_raw) = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = StreamRng::keyed(seed, &[tag::VERIFY, 0, chunk as u64]);
            let count = CHUNK.min(sample_budget - chunk * CHUNK);
            let mut cov = 0usize;
            let mut far: f64 = 0.0;
            for _ in 0..count {
                let p = space.sample_uniform(&mut rng);
                let mut hits = 0;
                let mut home = usize::MAX;
                for (j, c) in partition.cells.iter().enumerate() {
                    if c.contains(&p) {
                        hits += 1;
                        home = j;
                    }
                }
                if hits != 1 {
                    cov += 1;
                    continue;
                }
                far = far.max(space.distance(&p, &partition.cells[home].anchor));
            }
            (cov, far)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0, 0.0f64), |a, b| (a.0 + b.0, a.1.max(b.1)));

    // Points drawn inside B(anchor, inradius) must belong to the cell.
    let inner_ball_violations: usize = partition
        .cells
        .par_iter()
        .map(|c| {
            let mut rng = StreamRng::keyed(seed, &[tag::VERIFY, 2, c.id as u64]);
            let r_in = c.inradius() * (1.0 - 1e-9);
            (0..100)
                .filter(|_| {
                    let r = r_in * rng.uniform();
                    let p = space.offset_point(&c.anchor, r, &mut rng);
                    !c.contains(&p)
                })
                .count()
        })
        .sum();

    let diameter_violations: usize = partition
        .cells
        .par_iter()
        .map(|c| {
            let mut rng = StreamRng::keyed(seed, &[tag::VERIFY, 1, c.id as u64]);
            (0..100)
                .filter(|_| {
                    let a = c.sample(&mut rng);
                    let b = c.sample(&mut rng);
                    space.distance(&a, &b) > c.diameter * (1.0 + 1e-12)
                })
                .count()
        })
        .sum();

    let scaled: Vec<f64> = partition.cells.iter().map(|c| c.diameter * scale).collect();
    let scaled_diameter_min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let scaled_diameter_max = scaled.iter().copied().fold(0.0, f64::max);
    let c1 = partition
        .cells
        .iter()
        .map(|c| c.inradius())
        .fold(f64::INFINITY, f64::min)
        * scale;
    let passed = measure_sum_residual <= 1e-12
        && max_measure_residual <= 1e-12
        && coverage_violations == 0
        && diameter_violations == 0
        && inner_ball_violations == 0
        && partition.n == n;
    PartitionReport {
        n,
        measure_sum_residual,
        max_measure_residual,
        coverage_violations,
        diameter_violations,
        inner_ball_violations,
        scaled_diameter_min,
        scaled_diameter_max,
        c1,
        c2: c2_raw * scale,
        samples: sample_budget,
        passed,
    }
}
