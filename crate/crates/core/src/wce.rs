//! Worst-case errors over potential-space unit balls.
//!
//! For a draw `x` the worst-case error is `‖F‖_{L^q}` with the dual density
//! `F(y) = Σ_j ∫_{X_j} (Φ(x_j, y) - Φ(z, y)) dz`. On homogeneous spaces the
//! inner integrals telescope: `Σ_j ∫_{X_j} Φ(z, y) dz = ∫_M Φ(z, y) dz` is a
//! constant `C_Φ` known in closed form, so `F(y) = Σ_j ω_j Φ(x_j, y) - C_Φ`
//! exactly and only the outer integral over `y` is sampled. The nested Monte
//! Carlo form is kept as [`dual_density_nested`] for cross-checks. The
//! per-cell quantities `Γ(Φ)` and `Δ(Φ)` do not telescope and use inner
//! cell means.
//!
//! Outer integrals are importance sampled. Near a node the integrands blow up
//! like `t^{-q(d-α)}`, which has infinite variance under uniform sampling
//! (for `d = 2`, `α = 1` at every `q`). Half of the `y` samples are uniform;
//! the other half are drawn around a random node with radial density
//! `∝ t^{-q(d-α)}`, which makes the weighted integrand bounded near nodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubature::{check_draw, draw_nodes_indexed, ErrorStats, NodeDraw};
use crate::error::{Error, Result};
use crate::kernel::{cell_kernel_mean, KernelFamily, KernelProfile, KernelSpec, SINGULAR_RADIUS};
use crate::partition::Partition;
use crate::rng::{tag, StreamRng};
use crate::space::{Point, SpaceDescriptor, SpaceKind};
use crate::stats::{mean_power_root, mean_se, root_se, Estimate};

/// Outer samples are processed in fixed chunks so results never depend on
/// the number of worker threads.
const CHUNK: usize = 1024;
const MAX_REDRAWS: usize = 100;

/// `q` with `1/p + 1/q = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WceConfig {
    pub partition: Partition,
    pub kernel: KernelSpec,
    pub p: f64,
    pub q: f64,
    /// Outer `y` samples (per draw for the worst-case error and `A_N`; in
    /// total for `Γ` per cell and for `Δ`).
    pub m_y: usize,
    /// Inner samples per cell mean.
    pub m_z: usize,
    pub n_draws: usize,
    pub seed: u64,
}

impl WceConfig {
    pub fn new(partition: Partition, kernel: KernelSpec, p: f64) -> Result<Self> {
        let cfg = Self {
            partition,
            kernel,
            p,
            q: conjugate(p),
            m_y: 4096,
            m_z: 256,
            n_draws: 200,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_budgets(mut self, n_draws: usize, m_y: usize, m_z: usize) -> Self {
        self.n_draws = n_draws;
        self.m_y = m_y;
        self.m_z = m_z;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.partition.space
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let space = self.space();
        if self.kernel.d != space.d {
            return Err(Error::InvalidArgument(format!(
                "kernel dimension {} differs from space dimension {}",
                self.kernel.d, space.d
            )));
        }
        if !(self.p > 1.0) {
            return Err(Error::InvalidArgument(format!("p must lie in (1, inf], got {}", self.p)));
        }
        let inv_p = if self.p.is_infinite() { 0.0 } else { 1.0 / self.p };
        if (inv_p + 1.0 / self.q - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("p = {} and q = {} are not conjugate", self.p, self.q)));
        }
        if self.kernel.family != KernelFamily::Constant && self.kernel.alpha <= space.d as f64 * inv_p {
            return Err(Error::InvalidArgument(format!(
                "alpha = {} must exceed d/p = {}: the kernel is not q-integrable",
                self.kernel.alpha,
                space.d as f64 * inv_p
            )));
        }
        if self.m_y == 0 || self.m_z == 0 || self.n_draws == 0 {
            return Err(Error::InvalidArgument("budgets must be positive".into()));
        }
        Ok(())
    }

    fn is_quadratic(&self) -> bool {
        (self.q - 2.0).abs() < 1e-12
    }
}

/// Fraction of outer samples drawn uniformly.
const UNIFORM_SHARE: f64 = 0.5;

/// Defensive mixture proposal for outer `y` samples around a node set.
struct OuterSampler<'a> {
    space: &'a SpaceDescriptor,
    /// Nodes in canonical (lexicographic) order, so estimates do not depend
    /// on how cells are labelled.
    nodes: Vec<Point>,
    rho: f64,
    /// Radial exponent: the proposal density behaves like `t^{-s}`.
    s: f64,
}

impl<'a> OuterSampler<'a> {
    fn new(cfg: &'a WceConfig, nodes: &[Point]) -> Self {
        let space = cfg.space();
        let mut nodes = nodes.to_vec();
        nodes.sort_by(|a, b| {
            a.coords()
                .iter()
                .zip(b.coords())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let d = space.d as f64;
        let s = if cfg.kernel.family == KernelFamily::Constant {
            0.0
        } else {
            (cfg.q * (d - cfg.kernel.alpha)).max(0.0)
        };
        Self {
            space,
            nodes,
            rho: 0.5 * cfg.partition.max_diameter(),
            s,
        }
    }

    /// Proposal density of the node-centred component at distance `t`.
    #[inline]
    fn radial_density(&self, t: f64) -> f64 {
        if t > self.rho {
            return 0.0;
        }
        let e = self.space.d as f64 - self.s;
        // radial law (e/ρ^e) r^{e-1} spread over the metric sphere of radius t
        let shell = match self.space.kind {
            SpaceKind::Torus => {
                let d = self.space.d as i32;
                d as f64 * 2f64.powi(d) * t.powi(d - 1)
            }
            SpaceKind::Sphere2 => 2.0 * std::f64::consts::PI * t.sin(),
        };
        e * t.powf(e - 1.0) / (self.rho.powf(e) * shell)
    }

    /// Draws `y` away from every node and returns it with `1 / density(y)`.
    fn sample(&self, rng: &mut StreamRng) -> Result<(Point, f64)> {
        let e = self.space.d as f64 - self.s;
        for _ in 0..=MAX_REDRAWS {
            let y = if rng.uniform() < UNIFORM_SHARE {
                self.space.sample_uniform(rng)
            } else {
                let x = &self.nodes[rng.index(self.nodes.len())];
                let r = self.rho * rng.uniform().powf(1.0 / e);
                self.space.offset_point(x, r, rng)
            };
            let mut near = 0.0;
            let mut singular = false;
            for x in &self.nodes {
                let t = self.space.distance(x, &y);
                if t < SINGULAR_RADIUS {
                    singular = true;
                    break;
                }
                near += self.radial_density(t);
            }
            if singular {
                continue;
            }
            let density = UNIFORM_SHARE / self.space.total_measure
                + (1.0 - UNIFORM_SHARE) * near / self.nodes.len() as f64;
            return Ok((y, 1.0 / density));
        }
        Err(Error::RedrawExhausted(MAX_REDRAWS))
    }
}

/// `F(y)` for a fixed draw, with the telescoped inner integrals.
struct DualDensity<'a> {
    space: &'a SpaceDescriptor,
    prof: KernelProfile,
    weights: Vec<f64>,
    nodes: &'a [Point],
    total: f64,
}

impl<'a> DualDensity<'a> {
    fn new(cfg: &'a WceConfig, draw: &'a NodeDraw) -> Self {
        let space = cfg.space();
        Self {
            space,
            prof: cfg.kernel.profile(space),
            weights: cfg.partition.cells.iter().map(|c| c.measure).collect(),
            nodes: &draw.nodes,
            total: cfg.kernel.space_integral(space),
        }
    }

    #[inline]
    fn eval(&self, y: &Point) -> Result<f64> {
        let mut s = 0.0;
        for (w, x) in self.weights.iter().zip(self.nodes) {
            let t = self.space.distance(x, y);
            if t < SINGULAR_RADIUS {
                return Err(Error::Singularity(t));
            }
            s += w * self.prof.value(t);
        }
        Ok(s - self.total)
    }
}

/// `F(y) = Σ_j ω_j Φ(x_j, y) - ∫_M Φ(z, y) dz`.
pub fn dual_density(cfg: &WceConfig, draw: &NodeDraw, y: &Point) -> Result<f64> {
    check_draw(draw, &cfg.partition)?;
    DualDensity::new(cfg, draw).eval(y)
}

/// `F(y)` with every cell integral replaced by an `m_z`-sample mean.
pub fn dual_density_nested(cfg: &WceConfig, draw: &NodeDraw, y: &Point, rng: &mut StreamRng) -> Result<f64> {
    check_draw(draw, &cfg.partition)?;
    let space = cfg.space();
    let prof = cfg.kernel.profile(space);
    let mut s = 0.0;
    for (cell, x) in cfg.partition.cells.iter().zip(&draw.nodes) {
        let t = space.distance(x, y);
        if t < SINGULAR_RADIUS {
            return Err(Error::Singularity(t));
        }
        let m = cell_kernel_mean(&prof, space, cell, y, cfg.m_z, rng, 1)?;
        s += cell.measure * (prof.value(t) - m.first);
    }
    Ok(s)
}

/// Importance-sampled mean of `|F(y)|^q / density(y)` over `m` outer
/// samples, with its standard error; `stream` keys the samples.
fn dual_power_mean(cfg: &WceConfig, draw: &NodeDraw, m: usize, stream: &[u64]) -> Result<Estimate> {
    let dd = DualDensity::new(cfg, draw);
    let sampler = OuterSampler::new(cfg, &draw.nodes);
    let q = cfg.q;
    let chunks = m.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut key = stream.to_vec();
            key.push(c as u64);
            let mut rng = StreamRng::keyed(cfg.seed, &key);
            let len = CHUNK.min(m - c * CHUNK);
            (0..len)
                .map(|_| {
                    let (y, w) = sampler.sample(&mut rng)?;
                    Ok(w * dd.eval(&y)?.abs().powf(q))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(mean_se(&parts.concat()))
}

/// `{∫_M |F(y)|^q dy}^{1/q}` estimated from `m_y` outer samples.
pub fn worst_case_error(cfg: &WceConfig, draw: &NodeDraw) -> Result<Estimate> {
    cfg.validate()?;
    check_draw(draw, &cfg.partition)?;
    let mean = dual_power_mean(cfg, draw, cfg.m_y, &[tag::OUTER_Y, draw.index])?;
    Ok(root_se(mean, cfg.q))
}

/// `A_N = {E_x wce(x)^q}^{1/q}` over `n_draws` draws; `samples` holds the
/// per-draw worst-case errors.
pub fn estimate_an(cfg: &WceConfig) -> Result<ErrorStats> {
    cfg.validate()?;
    if cfg.n_draws < 2 {
        return Err(Error::InvalidArgument("A_N needs at least 2 draws".into()));
    }
    let per_draw: Vec<f64> = (0..cfg.n_draws as u64)
        .into_par_iter()
        .map(|k| {
            let draw = draw_nodes_indexed(&cfg.partition, cfg.seed, k);
            dual_power_mean(cfg, &draw, cfg.m_y, &[tag::OUTER_Y, k]).map(|e| e.value)
        })
        .collect::<Result<_>>()?;
    let est = mean_power_root(&per_draw, cfg.q);
    Ok(ErrorStats {
        p: cfg.q,
        n_draws: cfg.n_draws,
        moment_estimate: est.value,
        standard_error: est.se,
        samples: Some(per_draw.iter().map(|a| a.powf(1.0 / cfg.q)).collect()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// `Γ(Φ) = Σ_j γ_j`.
    pub gamma: Estimate,
    /// Per-cell estimates of `γ_j^q`.
    pub cell_moments: Vec<Estimate>,
}

/// `Γ(Φ) = Σ_j {⨍_{X_j} ∫_M |ω_j (Φ(x_j, y) - ⨍_{X_j} Φ(z, y) dz)|^q dy dx_j}^{1/q}`.
///
/// Each cell uses `m_y` pairs `(x_j, y)`, `y` importance sampled around
/// `x_j`; at `q = 2` the square comes from
/// two independent inner means and is unbiased, otherwise the plug-in
/// estimate is biased upwards by the inner noise (see [`bias_probe`]).
pub fn gamma_phi(cfg: &WceConfig) -> Result<GammaEstimate> {
    cfg.validate()?;
    let space = cfg.space();
    let prof = cfg.kernel.profile(space);
    let quadratic = cfg.is_quadratic();
    let cell_moments: Vec<Estimate> = cfg
        .partition
        .cells
        .par_iter()
        .map(|cell| -> Result<Estimate> {
            let mut rng = StreamRng::keyed(cfg.seed, &[tag::GAMMA, cell.id as u64]);
            let mut vals = Vec::with_capacity(cfg.m_y);
            for _ in 0..cfg.m_y {
                let x = [cell.sample(&mut rng)];
                let (y, weight) = OuterSampler::new(cfg, &x).sample(&mut rng)?;
                let phi = prof.value(space.distance(&x[0], &y));
                let w = cell.measure;
                let v = if quadratic {
                    let m = cell_kernel_mean(&prof, space, cell, &y, cfg.m_z, &mut rng, 2)?;
                    w * w * (phi - m.first) * (phi - m.second.unwrap_or(m.first))
                } else {
                    let m = cell_kernel_mean(&prof, space, cell, &y, cfg.m_z, &mut rng, 1)?;
                    (w * (phi - m.first)).abs().powf(cfg.q)
                };
                vals.push(weight * v);
            }
            Ok(mean_se(&vals))
        })
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    let mut var = 0.0;
    for m in &cell_moments {
        let g = root_se(*m, cfg.q);
        value += g.value;
        var += g.se * g.se;
    }
    Ok(GammaEstimate {
        gamma: Estimate::new(value, var.sqrt()),
        cell_moments,
    })
}

/// `Δ(Φ) = {E_x ∫_M (Σ_j |ω_j (Φ(x_j, y) - ⨍_{X_j} Φ(z, y) dz)|^2)^{q/2} dy}^{1/q}`.
///
/// Each of the `m_y` outer samples is a fresh draw paired with an
/// importance-sampled `y`. At `q = 2` the squares use two independent inner means (unbiased);
/// otherwise the plug-in sum is raised to `q/2`.
pub fn delta_phi(cfg: &WceConfig) -> Result<Estimate> {
    cfg.validate()?;
    let space = cfg.space();
    let prof = cfg.kernel.profile(space);
    let quadratic = cfg.is_quadratic();
    let q = cfg.q;
    let chunks = cfg.m_y.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let len = CHUNK.min(cfg.m_y - c * CHUNK);
            (0..len)
                .map(|i| -> Result<f64> {
                    let sample = (c * CHUNK + i) as u64;
                    let mut rng = StreamRng::keyed(cfg.seed, &[tag::DELTA, sample]);
                    let draw = draw_nodes_indexed(&cfg.partition, cfg.seed ^ tag::DELTA, sample);
                    let (y, weight) = OuterSampler::new(cfg, &draw.nodes).sample(&mut rng)?;
                    let mut s = 0.0;
                    for (cell, x) in cfg.partition.cells.iter().zip(&draw.nodes) {
                        let phi = prof.value(space.distance(x, &y));
                        let w2 = cell.measure * cell.measure;
                        if quadratic {
                            let m = cell_kernel_mean(&prof, space, cell, &y, cfg.m_z, &mut rng, 2)?;
                            s += w2 * (phi - m.first) * (phi - m.second.unwrap_or(m.first));
                        } else {
                            let m = cell_kernel_mean(&prof, space, cell, &y, cfg.m_z, &mut rng, 1)?;
                            s += w2 * (phi - m.first).powi(2);
                        }
                    }
                    Ok(if quadratic { weight * s } else { weight * s.max(0.0).powf(0.5 * q) })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(root_se(mean_se(&parts.concat()), q))
}

/// Plug-in estimates at `m_z` and `2 m_z` inner samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasProbe {
    pub at_m_z: Estimate,
    pub at_2m_z: Estimate,
    /// `|difference| <= 3 combined SE`.
    pub consistent: bool,
}

fn probe(a: Estimate, b: Estimate) -> BiasProbe {
    BiasProbe {
        at_m_z: a,
        at_2m_z: b,
        consistent: (a.value - b.value).abs() <= 3.0 * a.se.hypot(b.se),
    }
}

/// Inner-budget sensitivity of `Γ(Φ)` and `Δ(Φ)`.
pub fn bias_probe(cfg: &WceConfig) -> Result<(BiasProbe, BiasProbe)> {
    let mut doubled = cfg.clone();
    doubled.m_z *= 2;
    let g = probe(gamma_phi(cfg)?.gamma, gamma_phi(&doubled)?.gamma);
    let d = probe(delta_phi(cfg)?, delta_phi(&doubled)?);
    Ok((g, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    /// `E(f) / ‖g‖_2` for the grid witness.
    pub dual_value: f64,
    pub wce: Estimate,
    pub ratio: f64,
    pub ratio_se: f64,
    pub grid_size: usize,
    pub reliable: bool,
}

/// Builds the extremal witness `g = F` on a midpoint grid of `T^1`, the
/// potential `f(x) = Σ_i Φ(x, y_i) g(y_i) Δy`, and compares `E(f)/‖g‖_2`
/// with the sampled worst-case error.
///
/// The grid is unreliable below 16 points per cell or when the ratio's
/// standard error exceeds 0.2.
pub fn extremal_witness_check(cfg: &WceConfig, draw: &NodeDraw, grid_size: usize) -> Result<WitnessReport> {
    cfg.validate()?;
    check_draw(draw, &cfg.partition)?;
    let space = cfg.space();
    if space.kind != SpaceKind::Torus || space.d != 1 {
        return Err(Error::UnsupportedSpace("the witness grid is implemented on T^1 only".into()));
    }
    if !cfg.is_quadratic() {
        return Err(Error::InvalidArgument("the witness check is implemented for p = q = 2".into()));
    }
    if grid_size == 0 {
        return Err(Error::InvalidArgument("empty witness grid".into()));
    }
    if cfg.kernel.family == KernelFamily::Constant {
        return Err(Error::Degenerate("constant kernel: the error functional vanishes (0/0)".into()));
    }
    let dd = DualDensity::new(cfg, draw);
    let prof = cfg.kernel.profile(space);
    let h = 1.0 / grid_size as f64;
    let grid: Vec<Point> = (0..grid_size).map(|i| Point::torus(&[(i as f64 + 0.5) * h])).collect();
    let g: Vec<f64> = grid.iter().map(|y| dd.eval(y)).collect::<Result<_>>()?;
    let g_norm = (g.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
    if g_norm == 0.0 {
        return Err(Error::Degenerate("the witness density vanishes on the grid".into()));
    }
    // f at the nodes, and ∫ f = Σ_i g_i Δy ∫ Φ(x, y_i) dx.
    let f_at_nodes: f64 = cfg
        .partition
        .cells
        .iter()
        .zip(&draw.nodes)
        .map(|(c, x)| {
            let fx: f64 = grid.iter().zip(&g).map(|(y, gi)| prof.value(space.distance(x, y)) * gi * h).sum();
            c.measure * fx
        })
        .sum();
    let f_integral = g.iter().sum::<f64>() * h * cfg.kernel.space_integral(space);
    let dual_value = (f_at_nodes - f_integral) / g_norm;
    let wce = worst_case_error(cfg, draw)?;
    if wce.value == 0.0 {
        return Err(Error::Degenerate("zero worst-case error".into()));
    }
    let ratio = dual_value / wce.value;
    let ratio_se = ratio.abs() * wce.se / wce.value;
    let reliable = grid_size >= 16 * cfg.partition.len() && ratio_se <= 0.2;
    Ok(WitnessReport {
        dual_value,
        wce,
        ratio,
        ratio_se,
        grid_size,
        reliable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n: usize,
    pub samples: usize,
    /// `min LHS / RHS` over the samples (RHS without its constant).
    pub min_ratio: f64,
    pub median_ratio: f64,
}

/// Samples `(j, z ∈ X_j, y)` with `dist(y, X_j) >= 2 δ_j` and reports the
/// smallest observed
/// `∫_{X_j} |Φ(x, y) - Φ(z, y)| dx / (N^{-1-ε/d} dist(y, X_j)^{α-d-ε})`.
pub fn lower_hypothesis_probe(cfg: &WceConfig, n_pairs: usize) -> Result<ProbeReport> {
    cfg.validate()?;
    let space = cfg.space();
    let prof = cfg.kernel.profile(space);
    let n = cfg.partition.len();
    let d = space.d as f64;
    let eps = cfg.kernel.eps;
    let rhs_scale = (n as f64).powf(-1.0 - eps / d);
    let expo = cfg.kernel.alpha - d - eps;
    let chunks = n_pairs.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = StreamRng::keyed(cfg.seed, &[tag::PROBE, c as u64]);
            let len = CHUNK.min(n_pairs - c * CHUNK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let cell = &cfg.partition.cells[rng.index(n)];
                let z = cell.sample(&mut rng);
                let mut found = None;
                for _ in 0..1000 {
                    let y = space.sample_uniform(&mut rng);
                    let dist = cell.distance_to(space, &y);
                    if dist >= 2.0 * cell.diameter {
                        found = Some((y, dist));
                        break;
                    }
                }
                let Some((y, dist)) = found else { continue };
                let fz = prof.value(space.distance(&z, &y));
                let lhs: f64 = (0..cfg.m_z)
                    .map(|_| (prof.value(space.distance(&cell.sample(&mut rng), &y)) - fz).abs())
                    .sum::<f64>()
                    * cell.measure
                    / cfg.m_z as f64;
                out.push(lhs / (rhs_scale * dist.powf(expo)));
            }
            out
        })
        .collect();
    let mut ratios = parts.concat();
    if ratios.is_empty() {
        return Err(Error::Degenerate("no admissible (cell, y) pairs".into()));
    }
    ratios.sort_by(f64::total_cmp);
    Ok(ProbeReport {
        n,
        samples: ratios.len(),
        min_ratio: ratios[0],
        median_ratio: ratios[ratios.len() / 2],
    })
}
