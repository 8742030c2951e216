//! Critic-only diagnostics against a frozen fake sampler.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_statistics, critic_step, stream_rng, streams, AdamConfig, AdamState, GradScope, MetricsRecord, METRICS_VERSION};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nets::{eval_critic, Mlp};
use crate::objectives::{LossKind, PenaltyKind};
use crate::tempering::{interpolate, make_batch, AlphaDist, TemperedBatch};
use crate::trainer::{EvalScores, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub loss: LossKind,
    pub penalty: PenaltyKind,
    pub r: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub checkpoint_every: Option<usize>,
    pub grad_scope: GradScope,
    /// Rows of the fresh batch the logged statistics are computed on.
    pub eval_batch: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Nd,
            penalty: PenaltyKind::R1 { lambda: 10.0 },
            r: 1.0,
            batch_size: 100,
            iterations: 2000,
            lr: 1e-4,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: None,
            grad_scope: GradScope::Full,
            eval_batch: 100,
        }
    }
}

impl ProbeConfig {
    fn as_train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            penalty: self.penalty,
            r: self.r,
            batch_size: self.batch_size,
            iterations: self.iterations,
            critic_steps: 1,
            lr_critic: self.lr,
            lr_generator: self.lr,
            adam: self.adam,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            noise_dim: 1,
            interpolated_noise: false,
            gradient_noise: 0.0,
            grad_scope: self.grad_scope,
            fairness: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.as_train_config().validate()?;
        if self.eval_batch < 2 {
            return Err(Error::Config("eval_batch must be at least 2".into()));
        }
        Ok(())
    }
}

/// Frozen generator: draws `n` rows from its output law.
pub type FakeSampler<'a> = dyn Fn(usize, &mut ChaCha8Rng) -> Tensor + 'a;

/// Tempered fakes `α·G₀(z₁) + (1 − α)·G₀(z₂)`, the linear-mixing generator
/// built from a frozen base sampler.
fn tempered_fake(fake: &FakeSampler<'_>, alpha: &[f64], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let f1 = fake(alpha.len(), rng);
    let f2 = fake(alpha.len(), rng);
    interpolate(alpha, &f1, &f2)
}

fn probe_batch(data: &Tensor, n: usize, dist: AlphaDist, fake: &FakeSampler<'_>, rng: &mut ChaCha8Rng) -> Result<(TemperedBatch, Tensor)> {
    let batch = make_batch(data, n, dist, 1, rng)?;
    let f = tempered_fake(fake, &batch.alpha1, rng)?;
    Ok((batch, f))
}

/// Trains only the critic against a frozen fake sampler and logs the loss
/// and per-sample gradient statistics of `L_i` at every checkpoint.
///
/// The statistics come from a fresh batch of `eval_batch` rows drawn after
/// the update, under the same temperature law as training.
pub fn probe_fixed_generator(cfg: &ProbeConfig, data: &Tensor, mut critic: Mlp, fake: &FakeSampler<'_>) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let tc = cfg.as_train_config();
    let dist = AlphaDist::new(cfg.r)?;
    let mut rng = stream_rng(cfg.seed, streams::BATCH);
    let mut eval_rng = stream_rng(cfg.seed, streams::EVAL);
    let mut noise_rng = stream_rng(cfg.seed, streams::GRADIENT_NOISE);
    let mut adam = AdamState::new(&critic.params);
    let stride = tc.stride();
    let mut out = Vec::new();
    for it in 0..cfg.iterations {
        let (batch, f) = probe_batch(data, cfg.batch_size, dist, fake, &mut rng)?;
        let step = critic_step(&tc, &mut critic, &mut adam, &batch, &f, it, &mut noise_rng)?;
        if (it + 1) % stride != 0 {
            continue;
        }
        let (eb, ef) = probe_batch(data, cfg.eval_batch, dist, fake, &mut eval_rng)?;
        let stats = batch_statistics(&critic, cfg.loss, &eb.q1, &eb.alpha1, &ef, &eb.alpha1, cfg.grad_scope)?;
        let d_fake = eval_critic(&critic, &ef, &eb.alpha1)?;
        out.push(MetricsRecord {
            v: METRICS_VERSION.into(),
            iteration: it + 1,
            critic_loss: stats.mean_loss,
            loss_var: stats.loss_var,
            grad_var_trace: stats.grad_var_trace,
            penalty: step.penalty,
            generator_loss: -d_fake.mean(),
            critic_norms: critic.params.weight_norms(),
            generator_norms: Vec::new(),
            eval: EvalScores::default(),
            wall_time: None,
        });
    }
    Ok(out)
}

/// Runs the fixed-generator probe once per temperature weight, with the same
/// seed and critic initialization for every arm.
pub fn probe_variance_reduction(
    cfg: &ProbeConfig,
    rs: &[f64],
    data: &Tensor,
    critic: &Mlp,
    fake: &FakeSampler<'_>,
) -> Result<Vec<Vec<MetricsRecord>>> {
    rs.iter()
        .map(|&r| {
            let arm = ProbeConfig { r, ..cfg.clone() };
            probe_fixed_generator(&arm, data, critic.clone(), fake)
        })
        .collect()
}
