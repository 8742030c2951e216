//! Diagnostic probes over arms: mode separation, temperature weight, and
//! injected gradient noise.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, replicate_configs, replicate_dir, run_train, write_config, write_metrics, ExperimentConfig};
use crate::autodiff::Tensor;
use crate::data::{sample_mixture, MixtureSpec};
use crate::error::{Error, Result};
use crate::nets::{Mlp, MlpSpec};
use crate::trainer::probes::{probe_fixed_generator, FakeSampler, ProbeConfig};
use crate::trainer::{stream_rng, streams, MetricsRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    /// Critic-only training against the left mode, one arm per `mu2`.
    FixedGenerator,
    /// The same probe at one `mu2`, one arm per temperature weight `r`.
    VarianceReduction,
    /// Full training runs, one arm per injected gradient-noise level.
    NoiseInjection,
}

impl FromStr for ProbeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-generator" => Ok(ProbeKind::FixedGenerator),
            "variance-reduction" => Ok(ProbeKind::VarianceReduction),
            "noise-injection" => Ok(ProbeKind::NoiseInjection),
            _ => Err(Error::Config(format!(
                "unknown probe kind {s:?} (expected fixed-generator, variance-reduction or noise-injection)"
            ))),
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::FixedGenerator => "fixed-generator",
            ProbeKind::VarianceReduction => "variance-reduction",
            ProbeKind::NoiseInjection => "noise-injection",
        })
    }
}

/// Final state of one arm of one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmResult {
    pub arm: String,
    pub replicate: usize,
    /// Metrics file of the arm.
    pub path: PathBuf,
    pub last: Option<MetricsRecord>,
    /// `ln W1` at the last checkpoint, for noise-injection arms.
    pub log_w1: Option<f64>,
}

/// Law of the frozen generator: the left mode `N(−mu2, σ²)`.
pub fn left_mode(mu2: f64, sigma: f64) -> impl Fn(usize, &mut rand_chacha::ChaCha8Rng) -> Tensor {
    move |n, rng| {
        Tensor::from_fn(n, 1, |_, _| {
            let e: f64 = rng.sample(StandardNormal);
            -mu2 + sigma * e
        })
    }
}

/// One-input critic for the probes, initialized from the probe seed.
pub fn probe_critic(cfg: &ExperimentConfig, probe: &ProbeConfig) -> Result<Mlp> {
    let spec = MlpSpec::uniform(1, cfg.critic.widths(false), cfg.critic.activation, 1, probe.loss.critic_head())?;
    let seed: u64 = stream_rng(probe.seed, streams::INIT).random();
    Mlp::new(spec, seed)
}

/// Two-mode data at `±mu2` with the arm's data seed.
pub fn probe_data(cfg: &ExperimentConfig, mu2: f64) -> Result<Tensor> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.probe_arms.seed);
    sample_mixture(&MixtureSpec::two1d(mu2), cfg.probe_arms.n, &mut rng)
}

/// Runs one critic-only arm and writes its log.
pub fn probe_arm(cfg: &ExperimentConfig, probe: &ProbeConfig, mu2: f64, path: &Path) -> Result<Vec<MetricsRecord>> {
    let data = probe_data(cfg, mu2)?;
    let critic = probe_critic(cfg, probe)?;
    let fake = left_mode(mu2, MixtureSpec::two1d(mu2).sigma);
    let fake: &FakeSampler<'_> = &fake;
    let log = probe_fixed_generator(probe, &data, critic, fake)?;
    write_metrics(path, &log)?;
    Ok(log)
}

fn fmt_arm(name: &str, v: f64) -> String {
    format!("{name}-{v}")
}

/// Runs every arm of `kind` for every replicate. Critic-only probes write
/// `rep-XXX/<arm>.jsonl`; noise injection writes a full training run under
/// `sigma-<σ>/`.
pub fn run_probe(kind: ProbeKind, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ArmResult>> {
    cfg.validate()?;
    create_dir(out)?;
    write_config(out, cfg)?;
    if kind == ProbeKind::NoiseInjection {
        let mut results = Vec::new();
        for &sigma in &cfg.probe_arms.sigma {
            let mut arm = cfg.clone();
            arm.train.gradient_noise = sigma;
            let name = fmt_arm("sigma", sigma);
            let dir = out.join(&name);
            for (i, s) in run_train(&arm, &dir)?.into_iter().enumerate() {
                let path = replicate_dir(&dir, i).join(super::METRICS_FILE);
                results.push(ArmResult {
                    arm: name.clone(),
                    replicate: i,
                    last: super::read_metrics(&path)?.pop(),
                    path,
                    log_w1: s.log_w1,
                });
            }
        }
        return Ok(results);
    }
    let arms: Vec<(String, f64, ProbeConfig)> = match kind {
        ProbeKind::FixedGenerator => cfg
            .probe_arms
            .mu2
            .iter()
            .map(|&m| (fmt_arm("mu2", m), m, cfg.probe.clone()))
            .collect(),
        ProbeKind::VarianceReduction => cfg
            .probe_arms
            .r
            .iter()
            .map(|&r| {
                let p = ProbeConfig { r, ..cfg.probe.clone() };
                (fmt_arm("r", r), cfg.probe_arms.variance_reduction_mu2, p)
            })
            .collect(),
        ProbeKind::NoiseInjection => unreachable!(),
    };
    let per_rep: Vec<Vec<ArmResult>> = replicate_configs(cfg)
        .par_iter()
        .enumerate()
        .map(|(i, rc)| {
            let dir = replicate_dir(out, i);
            create_dir(&dir)?;
            write_config(&dir, rc)?;
            arms.iter()
                .map(|(name, mu2, p)| {
                    let p = ProbeConfig { seed: rc.probe.seed, ..p.clone() };
                    let path = dir.join(format!("{name}.jsonl"));
                    let mut log = probe_arm(rc, &p, *mu2, &path)?;
                    Ok(ArmResult {
                        arm: name.clone(),
                        replicate: i,
                        path,
                        last: log.pop(),
                        log_w1: None,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}
