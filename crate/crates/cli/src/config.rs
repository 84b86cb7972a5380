//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ekw_core::decision::Rule;
use ekw_core::model::ParamPath;
use ekw_core::optimize::{BfgsOptions, NelderMeadOptions};
use ekw_core::pipeline::QoiMeasure;
use ekw_core::simulate::PolicyTransform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Every stage seed derives from it unless overridden.
    pub seed: u64,
    /// Model parameter file.
    pub model: Option<PathBuf>,
    /// Panel data file.
    pub data: Option<PathBuf>,
    /// Estimation output read by `bootstrap`, `trace` and `rank`.
    /// Defaults to `estimate.json` in the output directory.
    pub estimate_file: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub estimate: EstimateBlock,
    #[serde(default)]
    pub policies: Vec<PolicyTransform>,
    #[serde(default)]
    pub qoi: QoiBlock,
    #[serde(default)]
    pub bootstrap: BootstrapBlock,
    #[serde(default)]
    pub decision: DecisionBlock,
    #[serde(default)]
    pub trace: TraceBlock,
    #[serde(default)]
    pub fit: FitBlock,
    #[serde(default)]
    pub toy: ToyBlock,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateBlock {
    pub persons: usize,
    pub emax_draws: usize,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self { persons: 2000, emax_draws: ekw_core::solver::DEFAULT_EMAX_DRAWS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateBlock {
    pub free: Vec<ParamPath>,
    /// Starting parameters; the model file when absent.
    pub start: Option<PathBuf>,
    pub n_sim: usize,
    pub tau: f64,
    pub emax_draws: usize,
    pub fd_step: f64,
    pub ridge_threshold: f64,
    pub nelder_mead: NelderMeadOptions,
    pub bfgs: BfgsOptions,
}

impl Default for EstimateBlock {
    fn default() -> Self {
        Self {
            free: Vec::new(),
            start: None,
            n_sim: ekw_core::likelihood::DEFAULT_N_SIM,
            tau: ekw_core::likelihood::DEFAULT_TAU,
            emax_draws: ekw_core::solver::DEFAULT_EMAX_DRAWS,
            fd_step: 0.01,
            ridge_threshold: 1e-6,
            nelder_mead: NelderMeadOptions::default(),
            bfgs: BfgsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QoiBlock {
    pub persons: usize,
    pub emax_draws: usize,
    pub measure: QoiMeasure,
}

impl Default for QoiBlock {
    fn default() -> Self {
        Self { persons: 2000, emax_draws: 200, measure: QoiMeasure::MeanSchooling }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapBlock {
    pub draws: usize,
    pub alpha: f64,
    pub seed: Option<u64>,
}

impl Default for BootstrapBlock {
    fn default() -> Self {
        Self { draws: 30_000, alpha: 0.1, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecisionBlock {
    pub rules: Vec<Rule>,
    pub tie_tol: f64,
    /// Extra alpha levels for the sensitivity sweep.
    pub alpha_grid: Vec<f64>,
    pub uniform_draws: usize,
}

impl Default for DecisionBlock {
    fn default() -> Self {
        Self { rules: Rule::ALL.to_vec(), tie_tol: 0.0, alpha_grid: Vec::new(), uniform_draws: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceBlock {
    /// Free parameter to move; the first free parameter when absent.
    pub parameter: Option<ParamPath>,
    pub points: usize,
}

impl Default for TraceBlock {
    fn default() -> Self {
        Self { parameter: None, points: 21 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FitBlock {
    /// Use the parameters in the estimate file instead of the model file.
    pub use_estimate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyBlock {
    pub alpha: f64,
    pub draws: usize,
    pub seed: Option<u64>,
}

impl Default for ToyBlock {
    fn default() -> Self {
        Self { alpha: 0.1, draws: ekw_core::toy::DEFAULT_TOY_DRAWS, seed: None }
    }
}

/// Per-stage seeds derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub emax: u64,
    pub simulation: u64,
    pub likelihood: u64,
    pub qoi: u64,
    pub bootstrap: u64,
}

pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing run config")?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.model, &mut cfg.data, &mut cfg.estimate_file, &mut cfg.estimate.start].into_iter().flatten() {
            fix(p);
        }
        fix(&mut cfg.output_dir);
        Ok((cfg, text))
    }

    fn check(&self) -> anyhow::Result<()> {
        let alpha_ok = |a: f64| a > 0.0 && a < 1.0;
        if !alpha_ok(self.bootstrap.alpha) || !alpha_ok(self.toy.alpha) {
            bail!("alpha must lie in (0, 1)");
        }
        if let Some(a) = self.decision.alpha_grid.iter().find(|a| !alpha_ok(**a)) {
            bail!("alpha_grid value {a} is outside (0, 1)");
        }
        if self.bootstrap.draws == 0 || self.toy.draws == 0 {
            bail!("bootstrap draws must be at least 1");
        }
        if !(self.decision.tie_tol >= 0.0) {
            bail!("tie_tol must be non-negative");
        }
        let mut names: Vec<&str> = self.policies.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            bail!("policy names must be unique");
        }
        if self.trace.points < 2 {
            bail!("trace.points must be at least 2");
        }
        Ok(())
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds {
            emax: derive_seed(self.seed, "emax"),
            simulation: derive_seed(self.seed, "simulation"),
            likelihood: derive_seed(self.seed, "likelihood"),
            qoi: derive_seed(self.seed, "qoi"),
            bootstrap: self.bootstrap.seed.unwrap_or_else(|| derive_seed(self.seed, "bootstrap")),
        }
    }

    pub fn estimate_path(&self) -> PathBuf {
        self.estimate_file.clone().unwrap_or_else(|| self.output_dir.join("estimate.json"))
    }

    pub fn model_path(&self) -> anyhow::Result<&Path> {
        let p = self.model.as_deref().context("config has no `model` file")?;
        if !p.exists() {
            bail!("model file {} does not exist", p.display());
        }
        Ok(p)
    }

    pub fn data_path(&self) -> anyhow::Result<&Path> {
        let p = self.data.as_deref().context("config has no `data` file")?;
        if !p.exists() {
            bail!("data file {} does not exist", p.display());
        }
        Ok(p)
    }
}
