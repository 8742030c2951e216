//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{MixtureSpec, TabularSchema};
use crate::error::{Error, Result};
use crate::nets::Activation;
use crate::trainer::probes::ProbeConfig;
use crate::trainer::TrainConfig;

/// Where the training rows come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Eight-mode ring, radius 1.5, `σ = 0.1`.
    Ring8 {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_data_seed")]
        seed: u64,
    },
    /// Two 1-D modes at `±mu2`, `σ = 0.1`.
    Two1d {
        mu2: f64,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_data_seed")]
        seed: u64,
    },
    Mixture {
        mixture: MixtureSpec,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_data_seed")]
        seed: u64,
    },
    /// A CSV file with either an inline schema or a shipped preset name.
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: Option<TabularSchema>,
        #[serde(default)]
        schema_preset: Option<String>,
        #[serde(default = "default_split")]
        split: f64,
        #[serde(default = "default_data_seed")]
        seed: u64,
    },
    /// Synthetic table with planted discrimination (schema preset `planted`).
    /// By default the shifted covariate is a pure proxy for the group.
    Planted {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_planted")]
        shift: f64,
        #[serde(default = "default_planted")]
        direct: f64,
        /// Weight of the shifted covariate in the label.
        #[serde(default)]
        effect: f64,
        #[serde(default = "default_split")]
        split: f64,
        #[serde(default = "default_data_seed")]
        seed: u64,
    },
}

fn default_n() -> usize {
    10_000
}
fn default_data_seed() -> u64 {
    12_345
}
fn default_split() -> f64 {
    0.9
}
fn default_planted() -> f64 {
    2.0
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Ring8 {
            n: default_n(),
            seed: default_data_seed(),
        }
    }
}

impl DatasetConfig {
    pub fn is_tabular(&self) -> bool {
        matches!(self, DatasetConfig::Csv { .. } | DatasetConfig::Planted { .. })
    }

    /// Train fraction and split seed of a tabular dataset.
    pub fn split_seed(&self) -> Option<(f64, u64)> {
        match self {
            DatasetConfig::Csv { split, seed, .. } | DatasetConfig::Planted { split, seed, .. } => Some((*split, *seed)),
            _ => None,
        }
    }

    /// Resolves the tabular schema for CSV and planted datasets.
    pub fn schema(&self) -> Result<Option<TabularSchema>> {
        match self {
            DatasetConfig::Csv {
                schema, schema_preset, ..
            } => match (schema, schema_preset) {
                (Some(s), None) => Ok(Some(s.clone())),
                (None, Some(name)) => TabularSchema::preset(name)
                    .map(Some)
                    .ok_or_else(|| Error::Config(format!("unknown schema preset {name:?}"))),
                _ => Err(Error::Config("csv dataset needs exactly one of schema or schema_preset".into())),
            },
            DatasetConfig::Planted { .. } => Ok(TabularSchema::preset("planted")),
            _ => Ok(None),
        }
    }
}

/// Hidden layers of one network; the width of the input and output follow
/// from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Hidden widths; defaults to four layers of 256 on toys and seven of 64
    /// on tables.
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            activation: Activation::Relu,
        }
    }
}

impl NetConfig {
    pub fn widths(&self, tabular: bool) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| if tabular { vec![64; 7] } else { vec![256; 4] })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplesConfig {
    /// Rows generated per temperature at the end of a run.
    pub n: usize,
    /// Temperatures at which final samples are drawn.
    pub alphas: Vec<f64>,
}

impl Default for SamplesConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            alphas: vec![1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Score the generator at every metrics checkpoint.
    pub enabled: bool,
    /// Generated rows per evaluation (and reference rows for W1).
    pub n: usize,
    /// Keep the sensitive attribute among downstream features.
    pub include_sensitive: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n: 500,
            include_sensitive: false,
        }
    }
}

/// Arms of the diagnostic probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeArms {
    /// Mode offsets compared by the fixed-generator probe.
    pub mu2: Vec<f64>,
    /// Temperature weights compared by the variance-reduction probe.
    pub r: Vec<f64>,
    /// Mode offset used by the variance-reduction probe.
    pub variance_reduction_mu2: f64,
    /// Gradient-noise levels compared by the noise-injection probe.
    pub sigma: Vec<f64>,
    /// Rows of the two-mode data set.
    pub n: usize,
    /// Seed of the two-mode data set.
    pub seed: u64,
}

impl Default for ProbeArms {
    fn default() -> Self {
        Self {
            mu2: vec![1.5, 3.0],
            r: vec![1.0, 0.99],
            variance_reduction_mu2: 3.0,
            sigma: vec![0.0, 0.01],
            n: default_n(),
            seed: default_data_seed(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FairMethod {
    /// Tempered training on cross-group interpolations.
    Ptgan,
    /// WGAN-GP, then a second phase of half the iterations with the
    /// generator fairness penalty.
    Fairwgangp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FairConfig {
    pub method: FairMethod,
    /// Temperature weight used for fair tempered training, replacing `train.r`.
    pub r: f64,
    /// Temperatures at which data sets are generated; within `[0.5, 1]`.
    pub alphas: Vec<f64>,
    /// Independent generated data sets per temperature.
    pub sets_per_alpha: usize,
    /// Fairness penalty weight for the second phase of the baseline.
    pub lambda_f: f64,
    /// Load the generator from this checkpoint instead of training.
    pub generator_checkpoint: Option<PathBuf>,
}

impl Default for FairConfig {
    fn default() -> Self {
        Self {
            method: FairMethod::Ptgan,
            r: 0.2,
            alphas: vec![1.0, 0.875, 0.75, 0.625, 0.5],
            sets_per_alpha: 1,
            lambda_f: 10.0,
            generator_checkpoint: None,
        }
    }
}

/// Repair strengths for the geometric-repair baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepairConfig {
    pub lambdas: Vec<f64>,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub critic: NetConfig,
    pub generator: NetConfig,
    /// Independent runs; replicate `i` uses seed `train.seed + i`.
    pub replicates: usize,
    /// Gumbel-softmax temperature of tabular generator heads.
    pub gumbel_tau: f64,
    pub samples: SamplesConfig,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
    pub probe_arms: ProbeArms,
    pub fair: FairConfig,
    pub repair: RepairConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            critic: NetConfig::default(),
            generator: NetConfig::default(),
            replicates: 1,
            gumbel_tau: 0.5,
            samples: SamplesConfig::default(),
            eval: EvalConfig::default(),
            probe: ProbeConfig::default(),
            probe_arms: ProbeArms::default(),
            fair: FairConfig::default(),
            repair: RepairConfig::default(),
        }
    }
}

fn check_alphas(what: &str, alphas: &[f64], lo: f64) -> Result<()> {
    if alphas.is_empty() || alphas.iter().any(|a| !(lo..=1.0).contains(a)) {
        return Err(Error::Config(format!("{what} must be a non-empty list within [{lo}, 1]")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative dataset paths are taken relative to the config file.
        if let DatasetConfig::Csv { path: p, .. } = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.probe.validate()?;
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !(self.gumbel_tau > 0.0) {
            return Err(Error::Config("gumbel_tau must be positive".into()));
        }
        if self.samples.n == 0 || self.eval.n < 2 {
            return Err(Error::Config("samples.n must be >= 1 and eval.n >= 2".into()));
        }
        check_alphas("samples.alphas", &self.samples.alphas, 0.0)?;
        check_alphas("fair.alphas", &self.fair.alphas, 0.5)?;
        if !(0.0..=1.0).contains(&self.fair.r) {
            return Err(Error::Config(format!("fair.r={} outside [0, 1]", self.fair.r)));
        }
        if self.fair.sets_per_alpha == 0 {
            return Err(Error::Config("fair.sets_per_alpha must be at least 1".into()));
        }
        if self.repair.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config("repair.lambdas must lie in [0, 1]".into()));
        }
        for hidden in [&self.critic.hidden, &self.generator.hidden].into_iter().flatten() {
            if hidden.contains(&0) {
                return Err(Error::Config("hidden widths must be positive".into()));
            }
        }
        match &self.dataset {
            DatasetConfig::Two1d { mu2, .. } if !mu2.is_finite() => {
                return Err(Error::Config("two1d mu2 must be finite".into()));
            }
            DatasetConfig::Mixture { mixture, .. } => mixture.validate()?,
            DatasetConfig::Csv { split, .. } | DatasetConfig::Planted { split, .. } if !(*split > 0.0 && *split < 1.0) => {
                return Err(Error::Config(format!("split {split} outside (0, 1)")));
            }
            _ => {}
        }
        if let Some(s) = self.dataset.schema()? {
            s.validate()?;
        }
        Ok(())
    }
}
