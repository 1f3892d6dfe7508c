use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use strat_cubature::besov::SetDescriptor;
use strat_cubature::cubature::draw_nodes;
use strat_cubature::experiments::{
    csv_bytes, run_experiment, write_outputs, Check, ExperimentConfig, ExperimentKind, Row, Summary, Verdict,
    WceQuantity,
};
use strat_cubature::functions::TestFunction;
use strat_cubature::kernel::{kernel_bounds_check, KernelFamily, KernelSpec};
use strat_cubature::partition::build_partition;
use strat_cubature::wce::{extremal_witness_check, WceConfig};
use strat_cubature::{Point, SpaceKind};

/// Stratified random cubature experiments: partitions, worst-case errors,
/// Besov bounds, moment ratios and convergence rates.
#[derive(Parser)]
#[command(name = "stratcub", version)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition structure and diameter decay.
    Partition(Common),
    /// Averaged worst-case error (or Γ / Δ) versus N.
    Wce(Common),
    /// Fixed-function error of a Lipschitz function against the Besov bounds.
    Besov(Common),
    /// Moment ratios of the stratified sum.
    Mz(Common),
    /// Error of a set indicator versus N.
    Indicator(Common),
    /// Errors of the single-bump and summed sharpness functions.
    Sharpness(Common),
    /// Runs a suite of rate experiments (`[[experiment]]` tables, or a JSON array).
    Rates(Common),
    /// Structural checks: partitions, kernel bounds, and the extremal witness on T^1.
    Verify(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment file (TOML or JSON); inline flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `torus` or `sphere`.
    #[arg(long)]
    space: Option<SpaceKind>,
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated cell counts.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Kernel family (`riesz`, `rough_riesz`, `riesz_plus_power`).
    #[arg(long)]
    kernel: Option<KernelFamily>,
    /// Kernel exponent, or the Besov smoothness for `besov`.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// `average`, `gamma` or `delta` (wce only).
    #[arg(long, value_parser = parse_quantity)]
    quantity: Option<WceQuantity>,
    /// Test function as JSON, e.g. `{"kind":"cosine","freq":[3]}`.
    #[arg(long)]
    function: Option<String>,
    /// Set as JSON, e.g. `{"kind":"torus_box","start":[0.1],"len":[0.4]}`.
    #[arg(long)]
    set: Option<String>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    my: Option<usize>,
    #[arg(long)]
    mz: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cell carrying the bump (sharpness, p <= 2).
    #[arg(long)]
    cell: Option<usize>,
    /// Pairs for the lower-hypothesis probe (wce).
    #[arg(long)]
    probe_pairs: Option<usize>,
    /// Output stem; `.csv` and `.json` are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_quantity(s: &str) -> Result<WceQuantity, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
struct Suite {
    experiment: Vec<ExperimentConfig>,
}

fn load_suite(path: &PathBuf) -> Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    // A JSON array; TOML suites open with `[[`.
    let head = text.trim_start();
    if head.starts_with('[') && !head.starts_with("[[") {
        return Ok(serde_json::from_str(&text)?);
    }
    if text.contains("[[experiment]]") {
        let suite: Suite = toml::from_str(&text).context("parsing suite")?;
        return Ok(suite.experiment);
    }
    Ok(vec![ExperimentConfig::parse(&text)?])
}

impl Common {
    /// Config file (if any) with inline flags applied on top.
    fn build(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
                if cfg.kind != kind {
                    bail!("config describes a `{}` experiment, not `{}`", cfg.kind.as_str(), kind.as_str());
                }
                cfg
            }
            None => {
                let space = self.space.unwrap_or(SpaceKind::Torus);
                let mut cfg = ExperimentConfig::new(kind, space, self.dim.unwrap_or(1));
                fill_defaults(&mut cfg);
                cfg
            }
        };
        self.apply(&mut cfg)?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.space {
            cfg.space = s;
        }
        if let Some(d) = self.dim {
            cfg.dim = d;
        }
        if let Some(n) = &self.n {
            cfg.n = n.clone();
        }
        if let Some(p) = self.p {
            cfg.p = p;
        }
        if let Some(v) = self.draws {
            cfg.n_draws = v;
        }
        if let Some(v) = self.my {
            cfg.m_y = v;
        }
        if let Some(v) = self.mz {
            cfg.m_z = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.cell {
            cfg.cell = v;
        }
        if let Some(v) = self.probe_pairs {
            cfg.probe_pairs = v;
        }
        if let Some(v) = self.quantity {
            cfg.quantity = v;
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(f) = &self.function {
            cfg.function = Some(serde_json::from_str(f).context("parsing --function")?);
        }
        if let Some(s) = &self.set {
            cfg.set = Some(serde_json::from_str(s).context("parsing --set")?);
        }
        let d = match cfg.space {
            SpaceKind::Sphere2 => 2,
            SpaceKind::Torus => cfg.dim,
        };
        if cfg.kind == ExperimentKind::Wce || self.kernel.is_some() {
            let mut k = cfg.kernel.unwrap_or_else(|| KernelSpec::riesz(0.5 * d as f64 + 0.25, d));
            k.d = d;
            if let Some(f) = self.kernel {
                k.family = f;
            }
            if let Some(a) = self.alpha {
                k.alpha = a;
            }
            if let Some(e) = self.eps {
                k.eps = e;
            }
            if let Some(v) = self.kappa {
                k.kappa = v;
            }
            if k.family == KernelFamily::Riesz {
                k.eps = 1.0;
                k.kappa = 0.0;
            } else if k.kappa == 0.0 {
                k.kappa = 1.0;
            }
            cfg.kernel = Some(k);
        } else if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        Ok(())
    }
}

/// Inline runs get a sensible function or set for their space.
fn fill_defaults(cfg: &mut ExperimentConfig) {
    let torus = cfg.space == SpaceKind::Torus;
    let d = if torus { cfg.dim } else { 2 };
    let center = if torus {
        Point::torus(&vec![0.5; d.min(3)])
    } else {
        Point::from_angles(1.1, 0.4)
    };
    match cfg.kind {
        ExperimentKind::Besov => {
            cfg.function = Some(TestFunction::ConeBump {
                center,
                radius: 0.3,
                height: 1.0,
            })
        }
        ExperimentKind::Mz | ExperimentKind::Indicator => {
            // Per-cell integrals (needed by mz) exist for polar caps only;
            // indicator runs use a generic cap that no zone boundary follows.
            let set = if torus {
                SetDescriptor::torus_box(vec![0.1234; d], vec![0.4787; d])
            } else if cfg.kind == ExperimentKind::Mz {
                SetDescriptor::cap(Point::sphere(0.0, 0.0, 1.0), 1.0)
            } else {
                SetDescriptor::cap(center, 1.0)
            };
            if cfg.kind == ExperimentKind::Mz {
                cfg.function = Some(TestFunction::indicator(set));
            } else {
                cfg.set = Some(set);
            }
        }
        _ => {}
    }
}

fn print_summary(s: &Summary) {
    let slope = s
        .fit
        .as_ref()
        .map(|f| format!(" slope {:.4} [{:.4}, {:.4}]", f.slope, f.slope_ci.0, f.slope_ci.1))
        .unwrap_or_default();
    let pred = s.predicted.map(|p| format!(" predicted {p:.4}")).unwrap_or_default();
    eprintln!("{}:{slope}{pred} -> {:?}", s.experiment, s.verdict);
    for c in &s.checks {
        eprintln!("  [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    for n in &s.notes {
        eprintln!("  note: {n}");
    }
}

fn emit(out: Option<&PathBuf>, rows: &[Row], summaries: &[Summary]) -> Result<bool> {
    match out {
        Some(path) => {
            let (c, j) = write_outputs(path, rows, summaries)?;
            eprintln!("wrote {} and {}", c.display(), j.display());
        }
        None => {
            print!("{}", String::from_utf8(csv_bytes(rows)?)?);
            println!("{}", serde_json::to_string_pretty(summaries)?);
        }
    }
    summaries.iter().for_each(print_summary);
    Ok(summaries.iter().any(|s| s.verdict == Verdict::Fail))
}

fn run_rates(args: &Common) -> Result<bool> {
    let configs = match &args.config {
        Some(path) => {
            let mut cfgs = load_suite(path)?;
            for c in &mut cfgs {
                args.apply(c)?;
            }
            cfgs
        }
        None => [ExperimentKind::Wce, ExperimentKind::Besov, ExperimentKind::Indicator]
            .into_iter()
            .map(|k| Common { config: None, ..args.clone() }.build(k))
            .collect::<Result<_>>()?,
    };
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for cfg in &configs {
        let out = run_experiment(cfg).with_context(|| format!("experiment `{}`", cfg.label()))?;
        rows.extend(out.rows);
        summaries.push(out.summary);
    }
    emit(args.out.as_ref().or(configs.first().and_then(|c| c.out.as_ref())), &rows, &summaries)
}

fn run_verify(args: &Common) -> Result<bool> {
    let mut cfg = args.build(ExperimentKind::Partition)?;
    if args.n.is_none() && args.config.is_none() {
        cfg.n = vec![4, 16, 64, 256, 1024];
    }
    let mut out = run_experiment(&cfg)?;
    let space = cfg.space_descriptor()?;
    let d = space.d;
    let kernel = Common {
        kernel: Some(args.kernel.unwrap_or(KernelFamily::Riesz)),
        ..args.clone()
    };
    let mut kcfg = ExperimentConfig::new(ExperimentKind::Wce, cfg.space, d);
    kernel.apply(&mut kcfg)?;
    let k = kcfg.kernel.expect("kernel filled in");
    k.validate()?;
    let coarse = kernel_bounds_check(&k, &space, 20_000, 1e-4, cfg.seed);
    let fine = kernel_bounds_check(&k, &space, 20_000, 1e-7, cfg.seed);
    let growth = fine.diff_ratio_max.max(fine.size_ratio_max) / coarse.diff_ratio_max.max(coarse.size_ratio_max);
    out.summary.checks.push(Check {
        name: "kernel_bounds".into(),
        passed: growth.is_finite() && growth < 2.0,
        detail: format!(
            "{} kernel: size ratio {:.4}, Hölder ratio {:.4}; growth when refining separation 1e-4 -> 1e-7: {growth:.3}",
            k.family, fine.size_ratio_max, fine.diff_ratio_max
        ),
    });
    if cfg.space == SpaceKind::Torus && d == 1 && cfg.p == 2.0 {
        let part = build_partition(&space, 4)?;
        let wc = WceConfig::new(part.clone(), k, 2.0)?
            .with_budgets(cfg.n_draws, 1 << 18, cfg.m_z)
            .with_seed(cfg.seed);
        let w = extremal_witness_check(&wc, &draw_nodes(&part, cfg.seed), 1 << 18)?;
        out.summary.checks.push(Check {
            name: "extremal_witness".into(),
            passed: w.reliable && (w.ratio - 1.0).abs() <= 0.05,
            detail: format!("N = 4 witness ratio {:.4} ± {:.4} (target 1 ± 0.05)", w.ratio, w.ratio_se),
        });
    }
    if out.summary.checks.iter().any(|c| !c.passed) {
        out.summary.verdict = Verdict::Fail;
    }
    emit(cfg.out.as_ref(), &out.rows, &[out.summary])
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let (kind, args) = match &cli.command {
        Command::Partition(a) => (ExperimentKind::Partition, a),
        Command::Wce(a) => (ExperimentKind::Wce, a),
        Command::Besov(a) => (ExperimentKind::Besov, a),
        Command::Mz(a) => (ExperimentKind::Mz, a),
        Command::Indicator(a) => (ExperimentKind::Indicator, a),
        Command::Sharpness(a) => (ExperimentKind::Sharpness, a),
        Command::Rates(a) => return run_rates(a),
        Command::Verify(a) => return run_verify(a),
    };
    let cfg = args.build(kind)?;
    let out = run_experiment(&cfg)?;
    emit(cfg.out.as_ref(), &out.rows, &[out.summary])
}

fn main() -> ExitCode {
    match real_main() {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
