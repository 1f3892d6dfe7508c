//! Experiment configuration, loadable from JSON or TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::besov::SetDescriptor;
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::kernel::KernelSpec;
use crate::space::{make_space, SpaceDescriptor, SpaceKind};

use super::fit::rate_kernel_ok;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Partition,
    Wce,
    Besov,
    Mz,
    Indicator,
    Sharpness,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Partition => "partition",
            ExperimentKind::Wce => "wce",
            ExperimentKind::Besov => "besov",
            ExperimentKind::Mz => "mz",
            ExperimentKind::Indicator => "indicator",
            ExperimentKind::Sharpness => "sharpness",
        }
    }
}

/// What a `wce` experiment records per N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WceQuantity {
    /// The averaged worst-case error `A_N`.
    #[default]
    Average,
    Gamma,
    Delta,
}

pub const DEFAULT_NS: [usize; 6] = [16, 32, 64, 128, 256, 512];
pub const DEFAULT_DRAWS: usize = 200;
pub const DEFAULT_MY: usize = 4096;
pub const DEFAULT_MZ: usize = 256;

fn default_dim() -> usize {
    1
}
fn default_ns() -> Vec<usize> {
    DEFAULT_NS.to_vec()
}
fn default_p() -> f64 {
    2.0
}
fn default_alpha() -> f64 {
    1.0
}
fn default_draws() -> usize {
    DEFAULT_DRAWS
}
fn default_my() -> usize {
    DEFAULT_MY
}
fn default_mz() -> usize {
    DEFAULT_MZ
}
fn default_verify_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Label written to the `experiment` column; defaults to the kind.
    #[serde(default)]
    pub name: Option<String>,
    pub space: SpaceKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_ns")]
    pub n: Vec<usize>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub quantity: WceQuantity,
    #[serde(default)]
    pub function: Option<TestFunction>,
    #[serde(default)]
    pub set: Option<SetDescriptor>,
    /// Besov smoothness for `besov` experiments.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
    #[serde(default = "default_my")]
    pub m_y: usize,
    #[serde(default = "default_mz")]
    pub m_z: usize,
    #[serde(default)]
    pub seed: u64,
    /// Cell carrying the single bump in `sharpness` runs with `p <= 2`.
    #[serde(default)]
    pub cell: usize,
    /// Membership samples for `partition` runs.
    #[serde(default = "default_verify_samples")]
    pub verify_samples: usize,
    /// Point pairs for the lower-hypothesis probe of `wce` runs (0 = skip).
    #[serde(default)]
    pub probe_pairs: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, space: SpaceKind, dim: usize) -> Self {
        Self {
            kind,
            name: None,
            space,
            dim,
            n: default_ns(),
            kernel: None,
            quantity: WceQuantity::default(),
            function: None,
            set: None,
            alpha: default_alpha(),
            p: default_p(),
            n_draws: DEFAULT_DRAWS,
            m_y: DEFAULT_MY,
            m_z: DEFAULT_MZ,
            seed: 0,
            cell: 0,
            verify_samples: default_verify_samples(),
            probe_pairs: 0,
            out: None,
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }

    pub fn space_descriptor(&self) -> Result<SpaceDescriptor> {
        let d = match self.space {
            SpaceKind::Sphere2 => 2,
            SpaceKind::Torus => self.dim,
        };
        make_space(self.space, d)
    }

    /// Parses JSON, or TOML when the text does not start with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Ok(serde_json::from_str(text)?)
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let space = self.space_descriptor()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.n.is_empty() {
            return bad("empty N list".into());
        }
        if self.kind != ExperimentKind::Partition {
            if self.n.len() < 4 {
                return bad(format!("rate experiments need >= 4 N values, got {}", self.n.len()));
            }
            for w in self.n.windows(2) {
                // Sphere and 2-torus grids round N, so allow a small slack.
                if (w[1] as f64) < 1.99 * w[0] as f64 {
                    return bad(format!("N list must grow geometrically with ratio >= 2 ({} -> {})", w[0], w[1]));
                }
            }
        }
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return bad(format!("p = {} must be finite and >= 1", self.p));
        }
        if self.n_draws < 2 {
            return bad("n_draws must be >= 2".into());
        }
        match self.kind {
            ExperimentKind::Partition => {}
            ExperimentKind::Wce => {
                let Some(k) = &self.kernel else {
                    return bad("wce experiments need a kernel".into());
                };
                k.validate()?;
                if !rate_kernel_ok(k) {
                    return bad("the constant kernel has zero error; it cannot be rate-fitted".into());
                }
                if k.d != space.d {
                    return bad(format!("kernel dimension {} does not match the space ({})", k.d, space.d));
                }
                if self.p <= 1.0 {
                    return bad("wce experiments need p > 1 so that q is finite".into());
                }
                if self.m_y == 0 || self.m_z == 0 {
                    return bad("m_y and m_z must be positive".into());
                }
            }
            ExperimentKind::Besov | ExperimentKind::Mz => {
                let Some(f) = &self.function else {
                    return bad(format!("{} experiments need a function", self.kind.as_str()));
                };
                f.check_space(&space)?;
                if self.kind == ExperimentKind::Besov && !(self.alpha > 0.0 && self.alpha <= 1.0) {
                    return bad(format!("Besov smoothness alpha = {} outside (0, 1]", self.alpha));
                }
            }
            ExperimentKind::Indicator => {
                let Some(s) = &self.set else {
                    return bad("indicator experiments need a set".into());
                };
                s.check_space(&space)?;
            }
            ExperimentKind::Sharpness => {}
        }
        Ok(())
    }
}
