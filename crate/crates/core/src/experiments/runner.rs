//! Runs a configured experiment over its N list and produces CSV rows plus
//! a JSON summary with the fitted slope and verdict.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::besov::{besov_rhs_bounds, sharpness_fj, sharpness_sum};
use crate::cubature::estimate_bn;
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::mz::{mz_pair, ratio_envelope};
use crate::partition::{build_partition, verify_partition, Partition};
use crate::rng::StreamRng;
use crate::space::SpaceDescriptor;
use crate::stats::Estimate;
use crate::wce::{conjugate, delta_phi, estimate_an, gamma_phi, lower_hypothesis_probe, WceConfig};

use super::config::{ExperimentConfig, ExperimentKind, WceQuantity};
use super::fit::{
    besov_exponent, indicator_exponent, rate_fit, regime_classify, wce_exponent, RateFit, RatePoint, Regime,
    SLOPE_TOLERANCE,
};

/// One CSV line; empty cells for parameters that do not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub space: String,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub kappa: Option<f64>,
    pub p: f64,
    pub q: Option<f64>,
    pub beta: Option<f64>,
    pub value: f64,
    pub stderr: f64,
    pub seed: u64,
    pub n_draws: usize,
    pub m_y: Option<usize>,
    pub m_z: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Nothing to judge, e.g. a critical-regime rate with a log factor.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    pub predicted: Option<f64>,
    pub fit: Option<RateFit>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Kind-specific per-N reports.
    pub details: serde_json::Value,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn failed(&self) -> bool {
        self.summary.verdict == Verdict::Fail
    }
}

/// Serializes rows with a header line.
pub fn csv_bytes(rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// `<stem>.csv` and `<stem>.json` next to `out` (an extension on `out` is
/// replaced).
pub fn output_paths(out: &Path) -> (PathBuf, PathBuf) {
    (out.with_extension("csv"), out.with_extension("json"))
}

pub fn write_outputs(out: &Path, rows: &[Row], summaries: &[Summary]) -> Result<(PathBuf, PathBuf)> {
    let (csv_path, json_path) = output_paths(out);
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&csv_path, csv_bytes(rows)?)?;
    let json = if summaries.len() == 1 {
        serde_json::to_string_pretty(&summaries[0])?
    } else {
        serde_json::to_string_pretty(summaries)?
    };
    std::fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}

/// Seed of the N-th grid point, so that different N use unrelated streams.
fn point_seed(seed: u64, n: usize) -> u64 {
    StreamRng::keyed(seed, &[n as u64]).next_raw()
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    space: SpaceDescriptor,
    rows: Vec<Row>,
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Ctx<'_> {
    fn row(&mut self, n: usize, est: Estimate) -> &mut Row {
        let cfg = self.cfg;
        self.rows.push(Row {
            experiment: cfg.label(),
            space: cfg.space.to_string(),
            d: self.space.d,
            n,
            alpha: None,
            eps: None,
            kappa: None,
            p: cfg.p,
            q: None,
            beta: None,
            value: est.value,
            stderr: est.se,
            seed: cfg.seed,
            n_draws: cfg.n_draws,
            m_y: None,
            m_z: None,
        });
        self.rows.last_mut().unwrap()
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    fn fit(&self) -> Result<RateFit> {
        let pts: Vec<RatePoint> = self
            .rows
            .iter()
            .map(|r| RatePoint {
                n: r.n,
                value: r.value,
                se: r.stderr,
            })
            .collect();
        rate_fit(&pts)
    }

    /// Fits and checks `|slope - predicted| <= tol`; with `upper_only` the
    /// check is `slope <= predicted + tol`.
    fn slope_check(&mut self, predicted: f64, upper_only: bool) -> Result<RateFit> {
        let fit = self.fit()?;
        let passed = if upper_only {
            fit.slope <= predicted + SLOPE_TOLERANCE
        } else {
            (fit.slope - predicted).abs() <= SLOPE_TOLERANCE
        };
        let rel = if upper_only { "<=" } else { "~" };
        self.check(
            "slope",
            passed,
            format!(
                "slope {:.4} (95% CI [{:.4}, {:.4}]) {rel} predicted {predicted:.4} ± {SLOPE_TOLERANCE}",
                fit.slope, fit.slope_ci.0, fit.slope_ci.1
            ),
        );
        Ok(fit)
    }
}

fn partitions(cfg: &ExperimentConfig, space: &SpaceDescriptor) -> Result<Vec<Partition>> {
    cfg.n.iter().map(|&n| build_partition(space, n)).collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let space = cfg.space_descriptor()?;
    let mut ctx = Ctx {
        cfg,
        space,
        rows: Vec::new(),
        checks: Vec::new(),
        notes: Vec::new(),
    };
    let mut regime = None;
    let mut predicted = None;
    let mut fit = None;
    let details = match cfg.kind {
        ExperimentKind::Partition => run_partition(&mut ctx, &mut predicted, &mut fit)?,
        ExperimentKind::Wce => run_wce(&mut ctx, &mut regime, &mut predicted, &mut fit)?,
        ExperimentKind::Besov => run_besov(&mut ctx, &mut predicted, &mut fit)?,
        ExperimentKind::Mz => run_mz(&mut ctx)?,
        ExperimentKind::Indicator => {
            let set = cfg.set.clone().expect("validated");
            let pred = indicator_exponent(set.beta(), ctx.space.d);
            let f = TestFunction::indicator(set.clone());
            for (&n, part) in cfg.n.iter().zip(partitions(cfg, &ctx.space)?) {
                let s = estimate_bn(&f, &part, cfg.p, cfg.n_draws, point_seed(cfg.seed, n))?;
                ctx.row(n, Estimate::new(s.moment_estimate, s.standard_error)).beta = Some(set.beta());
            }
            predicted = Some(pred);
            fit = Some(ctx.slope_check(pred, false)?);
            json!({ "set": set })
        }
        ExperimentKind::Sharpness => run_sharpness(&mut ctx, &mut predicted, &mut fit)?,
    };
    let Ctx {
        rows, checks, notes, ..
    } = ctx;
    let verdict = if checks.iter().any(|c| !c.passed) {
        Verdict::Fail
    } else if checks.is_empty() {
        Verdict::None
    } else {
        Verdict::Pass
    };
    let summary = Summary {
        experiment: cfg.label(),
        kind: cfg.kind,
        rows: rows.len(),
        regime,
        predicted,
        fit,
        checks,
        notes,
        details,
        verdict,
    };
    Ok(ExperimentOutput { rows, summary })
}

fn run_partition(ctx: &mut Ctx, predicted: &mut Option<f64>, fit: &mut Option<RateFit>) -> Result<serde_json::Value> {
    let cfg = ctx.cfg;
    let mut reports = Vec::new();
    for (&n, part) in cfg.n.iter().zip(partitions(cfg, &ctx.space)?) {
        let rep = verify_partition(&part, cfg.verify_samples, point_seed(cfg.seed, n));
        ctx.row(n, Estimate::exact(part.max_diameter()));
        reports.push(rep);
    }
    let bad: Vec<usize> = reports.iter().filter(|r| !r.passed).map(|r| r.n).collect();
    ctx.check(
        "structure",
        bad.is_empty(),
        format!("equal measures, coverage and diameter bounds; failing N: {bad:?}"),
    );
    let hi = reports.iter().map(|r| r.scaled_diameter_max).fold(0.0, f64::max);
    let lo = reports.iter().map(|r| r.scaled_diameter_min).fold(f64::INFINITY, f64::min);
    ctx.check(
        "diameter_regularity",
        hi / lo <= 4.0,
        format!("max/min of δ_j N^(1/d) over all N: {:.4} (limit 4)", hi / lo),
    );
    if cfg.n.len() >= 4 {
        let pred = -1.0 / ctx.space.d as f64;
        *predicted = Some(pred);
        *fit = Some(ctx.slope_check(pred, false)?);
    }
    Ok(json!({ "reports": reports }))
}

fn run_wce(
    ctx: &mut Ctx,
    regime: &mut Option<Regime>,
    predicted: &mut Option<f64>,
    fit: &mut Option<RateFit>,
) -> Result<serde_json::Value> {
    let cfg = ctx.cfg;
    let kernel = cfg.kernel.expect("validated");
    let q = conjugate(cfg.p);
    let mut probes = Vec::new();
    for (&n, part) in cfg.n.iter().zip(partitions(cfg, &ctx.space)?) {
        let wc = WceConfig::new(part, kernel, cfg.p)?
            .with_budgets(cfg.n_draws, cfg.m_y, cfg.m_z)
            .with_seed(point_seed(cfg.seed, n));
        let est = match cfg.quantity {
            WceQuantity::Average => {
                let s = estimate_an(&wc)?;
                Estimate::new(s.moment_estimate, s.standard_error)
            }
            WceQuantity::Gamma => gamma_phi(&wc)?.gamma,
            WceQuantity::Delta => delta_phi(&wc)?,
        };
        let row = ctx.row(n, est);
        row.alpha = Some(kernel.alpha);
        row.eps = Some(kernel.eps);
        row.kappa = Some(kernel.kappa);
        row.q = Some(q);
        row.m_y = Some(cfg.m_y);
        row.m_z = Some(cfg.m_z);
        if cfg.probe_pairs > 0 {
            // Coarse partitions can leave no y far enough from any cell.
            match lower_hypothesis_probe(&wc, cfg.probe_pairs) {
                Ok(pr) => probes.push(pr),
                Err(Error::Degenerate(_)) => ctx.notes.push(format!("N={n}: no admissible probe pairs")),
                Err(e) => return Err(e),
            }
        }
    }
    *regime = Some(regime_classify(&kernel));
    match wce_exponent(&kernel) {
        // Γ sums per-cell norms without cancellation: it bounds A_N from above
        // but does not share its exponent.
        _ if cfg.quantity == WceQuantity::Gamma => {
            ctx.notes.push("Γ is an upper bound for A_N with no predicted rate of its own; slope reported only".into());
            *fit = Some(ctx.fit()?);
        }
        Some(pred) => {
            *predicted = Some(pred);
            *fit = Some(ctx.slope_check(pred, false)?);
        }
        None => {
            ctx.notes
                .push("α = d/2 + ε: the rate carries a (log N)^(1/2) factor; no slope verdict".into());
            *fit = Some(ctx.fit()?);
        }
    }
    if !probes.is_empty() {
        let hi = probes.iter().map(|p| p.min_ratio).fold(0.0, f64::max);
        let lo = probes.iter().map(|p| p.min_ratio).fold(f64::INFINITY, f64::min);
        ctx.check(
            "lower_hypothesis",
            lo > 0.0 && hi / lo <= 4.0,
            format!("min ratio over samples in [{lo:.4e}, {hi:.4e}] across N (stability limit 4)"),
        );
    }
    Ok(json!({ "kernel": kernel, "quantity": cfg.quantity, "probes": probes }))
}

fn run_besov(ctx: &mut Ctx, predicted: &mut Option<f64>, fit: &mut Option<RateFit>) -> Result<serde_json::Value> {
    let cfg = ctx.cfg;
    let f = cfg.function.clone().expect("validated");
    let norm = f
        .besov_bound(&ctx.space, cfg.alpha, cfg.p)
        .ok_or_else(|| Error::NoClosedForm(format!("certified Besov bound for {}", f.name())))?;
    let parts = partitions(cfg, &ctx.space)?;
    let b_p = if cfg.p == 2.0 {
        1.0
    } else {
        ctx.notes
            .push("B(p) taken from the empirical moment-ratio envelope (not certified)".into());
        ratio_envelope(std::slice::from_ref(&f), &parts, cfg.p, cfg.n_draws, cfg.seed)?.hi
    };
    let mut bounds = Vec::new();
    let mut violations = Vec::new();
    for (&n, part) in cfg.n.iter().zip(&parts) {
        let s = estimate_bn(&f, part, cfg.p, cfg.n_draws, point_seed(cfg.seed, n))?;
        let rhs = besov_rhs_bounds(part, cfg.p, cfg.alpha, norm, b_p)?;
        let bound = if cfg.p <= 2.0 { rhs.rhs2 } else { rhs.rhs3 };
        if s.moment_estimate > bound + 3.0 * s.standard_error {
            violations.push(n);
        }
        ctx.row(n, Estimate::new(s.moment_estimate, s.standard_error)).alpha = Some(cfg.alpha);
        bounds.push(json!({ "n": n, "rhs": rhs, "applicable": bound }));
    }
    ctx.check(
        "bound",
        violations.is_empty(),
        format!(
            "B_N <= {} + 3 SE at every N (norm bound {norm:.4}, B(p) = {b_p:.4}); violations at N = {violations:?}",
            if cfg.p <= 2.0 { "rhs2" } else { "rhs3" }
        ),
    );
    let pred = besov_exponent(cfg.p, cfg.alpha, ctx.space.d);
    *predicted = Some(pred);
    let upper_only = cfg.p < 2.0;
    if upper_only {
        ctx.notes
            .push("for p < 2 the exponent is an upper rate; the verdict requires slope <= predicted + tol".into());
    }
    *fit = Some(ctx.slope_check(pred, upper_only)?);
    Ok(json!({ "function": f, "norm_bound": norm, "b_p": b_p, "bounds": bounds }))
}

fn run_mz(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let cfg = ctx.cfg;
    let f = cfg.function.clone().expect("validated");
    let mut reports = Vec::new();
    for (&n, part) in cfg.n.iter().zip(partitions(cfg, &ctx.space)?) {
        let r = mz_pair(&f, &part, cfg.p, cfg.n_draws, point_seed(cfg.seed, n))?;
        let ratio = r
            .ratio
            .ok_or_else(|| Error::Degenerate(format!("zero-variance configuration at N = {n}")))?;
        ctx.row(n, ratio);
        reports.push(r);
    }
    let ratios: Vec<Estimate> = reports.iter().filter_map(|r| r.ratio).collect();
    let lo = ratios.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().map(|r| r.value).fold(0.0, f64::max);
    if cfg.p == 2.0 {
        let worst = ratios.iter().map(|r| (r.value - 1.0).abs() / r.se).fold(0.0, f64::max);
        ctx.check(
            "p2_identity",
            worst <= 3.0,
            format!("largest |ratio - 1| / SE = {worst:.3} (limit 3)"),
        );
    } else {
        ctx.check(
            "n_stability",
            hi / lo <= 2.0,
            format!("ratio range [{lo:.4}, {hi:.4}], max/min {:.4} (limit 2)", hi / lo),
        );
    }
    ctx.notes.push("ratio envelope is empirical, not certified".into());
    Ok(json!({ "function": f, "envelope": [lo, hi], "reports": reports }))
}

fn run_sharpness(ctx: &mut Ctx, predicted: &mut Option<f64>, fit: &mut Option<RateFit>) -> Result<serde_json::Value> {
    let cfg = ctx.cfg;
    let single = cfg.p <= 2.0;
    let mut scaled = Vec::new();
    for (&n, part) in cfg.n.iter().zip(partitions(cfg, &ctx.space)?) {
        let f = if single {
            if cfg.cell >= n {
                return Err(Error::Config(format!("cell {} out of range for N = {n}", cfg.cell)));
            }
            sharpness_fj(&part, cfg.cell)?
        } else {
            sharpness_sum(&part)?
        };
        let s = estimate_bn(&f, &part, cfg.p, cfg.n_draws, point_seed(cfg.seed, n))?;
        ctx.row(n, Estimate::new(s.moment_estimate, s.standard_error)).alpha = Some(1.0);
        scaled.push(s.moment_estimate * n as f64);
    }
    let pred = if single { -1.0 } else { -0.5 };
    *predicted = Some(pred);
    *fit = Some(ctx.slope_check(pred, false)?);
    if single {
        let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scaled.iter().copied().fold(0.0, f64::max);
        ctx.check(
            "scaled_interval",
            lo > 0.0 && hi / lo <= 2.0,
            format!("N·B_N in [{lo:.4e}, {hi:.4e}] (max/min limit 2)"),
        );
    }
    Ok(json!({ "single_cell": single, "cell": cfg.cell, "scaled": scaled }))
}
