//! Alternating critic ascent / generator descent with tempered minibatches.

mod adam;
pub mod probes;
mod stats;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use stats::{batch_statistics, sample_variance, BatchStats, ElementwiseVariance, GradScope};

use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::nets::{critic_forward, draw_gumbel, generator_forward_with_noise, Mlp, OutputHead};
use crate::objectives::{
    coherency_penalty, critic_loss, fairness_penalty, generator_loss, gp_penalty, mp_penalty, penalty_points,
    r1_penalty, LossKind, PenaltyKind,
};
use crate::tempering::{interpolate, make_batch, make_fair_batch, sample_noise, AlphaDist, GroupedData, TemperedBatch};

/// Version tag written into every metrics line.
pub const METRICS_VERSION: &str = "v1";

/// Independent random streams derived from one seed.
pub(crate) mod streams {
    pub const BATCH: u64 = 0;
    pub const GRADIENT_NOISE: u64 = 1;
    pub const EVAL: u64 = 2;
    pub const SAMPLES: u64 = 3;
    pub const INIT: u64 = 4;
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator-side penalty on the soft label/sensitive columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessPenaltyConfig {
    pub lambda: f64,
    /// Generator output column holding the soft positive-label probability.
    pub label_col: usize,
    /// Generator output column holding the soft `A = 1` indicator.
    pub sensitive_col: usize,
    /// First iteration (0-based) at which the penalty is active.
    #[serde(default)]
    pub start_iteration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub penalty: PenaltyKind,
    /// Point-mass weight of the temperature law at `α = 1`.
    pub r: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub critic_steps: usize,
    pub lr_critic: f64,
    pub lr_generator: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Metrics stride; `None` means `max(1, iterations / 50)`.
    pub checkpoint_every: Option<usize>,
    pub noise_dim: usize,
    /// Feed `α·z + (1 − α)·z′` to the generator instead of `z`.
    pub interpolated_noise: bool,
    /// Standard deviation of Gaussian noise added to critic gradients.
    pub gradient_noise: f64,
    pub grad_scope: GradScope,
    pub fairness: Option<FairnessPenaltyConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Nd,
            penalty: PenaltyKind::Cp { lambda: 100.0 },
            r: 0.9,
            batch_size: 100,
            iterations: 1000,
            critic_steps: 1,
            lr_critic: 1e-4,
            lr_generator: 1e-4,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: None,
            noise_dim: 4,
            interpolated_noise: true,
            gradient_noise: 0.0,
            grad_scope: GradScope::LastLayer,
            fairness: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size {} must be at least 2", self.batch_size));
        }
        if self.critic_steps == 0 {
            return bad("critic_steps must be at least 1".into());
        }
        if !(self.lr_critic > 0.0 && self.lr_generator > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.r) {
            return bad(format!("r={} outside [0, 1]", self.r));
        }
        if self.noise_dim == 0 {
            return bad("noise_dim must be at least 1".into());
        }
        if !(self.gradient_noise >= 0.0 && self.gradient_noise.is_finite()) {
            return bad("gradient_noise must be finite and >= 0".into());
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be at least 1".into());
        }
        if let Some(f) = &self.fairness {
            if !(f.lambda >= 0.0) {
                return bad("fairness lambda must be >= 0".into());
            }
        }
        self.penalty.validate()?;
        self.adam.validate()
    }

    pub fn stride(&self) -> usize {
        self.checkpoint_every.unwrap_or((self.iterations / 50).max(1))
    }

    pub fn alpha_dist(&self) -> Result<AlphaDist> {
        AlphaDist::new(self.r)
    }
}

/// Training rows, either one pool or split by a binary sensitive attribute.
#[derive(Clone, Debug)]
pub enum TrainingData {
    Pool(Tensor),
    Grouped(GroupedData),
}

impl TrainingData {
    pub fn dim(&self) -> usize {
        match self {
            TrainingData::Pool(t) => t.cols(),
            TrainingData::Grouped(g) => g.rows_a0.cols(),
        }
    }

    fn batch(&self, n_b: usize, dist: AlphaDist, d_z: usize, rng: &mut impl Rng) -> Result<TemperedBatch> {
        match self {
            TrainingData::Pool(t) => make_batch(t, n_b, dist, d_z, rng),
            TrainingData::Grouped(g) => make_fair_batch(g, n_b, dist, d_z, rng),
        }
    }
}

/// Evaluation results attached to a metrics line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes_covered: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sp: Option<f64>,
}

/// One metrics line. Serialized as a flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub v: String,
    pub iteration: usize,
    /// Mean `L_i` of the critic objective on the batch, before the update.
    pub critic_loss: f64,
    pub loss_var: f64,
    pub grad_var_trace: f64,
    pub penalty: f64,
    pub generator_loss: f64,
    pub critic_norms: Vec<f64>,
    pub generator_norms: Vec<f64>,
    #[serde(flatten)]
    pub eval: EvalScores,
    /// Seconds since the run started; omitted unless timing was requested,
    /// so that logs stay bit-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl MetricsRecord {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let rec: Self = serde_json::from_str(line)?;
        if rec.v != METRICS_VERSION {
            return Err(Error::invalid(format!("unsupported metrics version '{}'", rec.v)));
        }
        Ok(rec)
    }
}

/// Hooks called by [`train`] at every checkpoint.
pub trait TrainObserver {
    fn evaluate(&mut self, _iteration: usize, _generator: &Mlp) -> Result<EvalScores> {
        Ok(EvalScores::default())
    }

    fn record(&mut self, _record: &MetricsRecord) -> Result<()> {
        Ok(())
    }

    /// Whether to stamp `wall_time` on records.
    fn timed(&self) -> bool {
        false
    }
}

/// Observer that does nothing.
pub struct NoObserver;
impl TrainObserver for NoObserver {}

#[derive(Clone, Debug)]
pub struct Trained {
    pub critic: Mlp,
    pub generator: Mlp,
    pub metrics: Vec<MetricsRecord>,
}

/// Adds i.i.d. `N(0, σ²)` to every entry.
pub fn inject_gradient_noise(grads: &mut [Tensor], sigma: f64, rng: &mut impl Rng) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    for g in grads {
        for v in g.as_mut_slice() {
            *v += normal.sample(rng);
        }
    }
    Ok(())
}

fn ensure_finite(value: f64, iteration: usize, quantity: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration,
            quantity: quantity.into(),
        })
    }
}

fn ensure_finite_grads(grads: &[Tensor], iteration: usize, quantity: &str) -> Result<()> {
    if grads.iter().all(Tensor::is_finite) {
        Ok(())
    } else {
        ensure_finite(f64::NAN, iteration, quantity)
    }
}

/// Penalty term for the critic objective, built on `g` against `critic`.
pub(crate) fn critic_penalty(
    g: &mut Graph,
    critic: &Mlp,
    bound: &crate::nets::BoundMlp,
    penalty: PenaltyKind,
    batch: &TemperedBatch,
    fake: &Tensor,
) -> Result<Option<crate::autodiff::Var>> {
    Ok(match penalty {
        PenaltyKind::None => None,
        PenaltyKind::Cp { lambda } => Some(coherency_penalty(g, critic, bound, batch, lambda)?),
        PenaltyKind::Mp { lambda } => {
            let pts = penalty_points(&batch.q1, fake, &batch.nu)?;
            Some(mp_penalty(g, critic, bound, &pts, &batch.alpha1, lambda)?)
        }
        PenaltyKind::Gp { lambda } => {
            let pts = penalty_points(&batch.q1, fake, &batch.nu)?;
            Some(gp_penalty(g, critic, bound, &pts, &batch.alpha1, lambda)?)
        }
        PenaltyKind::R1 { lambda } => Some(r1_penalty(g, critic, bound, &batch.q1, &batch.alpha1, lambda)?),
    })
}

pub(crate) struct CriticStep {
    pub penalty: f64,
}

/// One ascent step on `L̂_b − penalty`, descending its negation with Adam.
pub(crate) fn critic_step(
    config: &TrainConfig,
    critic: &mut Mlp,
    adam: &mut AdamState,
    batch: &TemperedBatch,
    fake: &Tensor,
    iteration: usize,
    noise_rng: &mut impl Rng,
) -> Result<CriticStep> {
    let mut g = Graph::new();
    let bound = critic.bind(&mut g);
    let rv = g.leaf(batch.q1.clone());
    let fv = g.leaf(fake.clone());
    let dr = critic_forward(&mut g, critic, &bound, rv, &batch.alpha1)?.output;
    let df = critic_forward(&mut g, critic, &bound, fv, &batch.alpha1)?.output;
    let loss = critic_loss(&mut g, config.loss, dr, df)?;
    ensure_finite(g.value(loss).item(), iteration, "critic loss")?;
    let (total, penalty) = match critic_penalty(&mut g, critic, &bound, config.penalty, batch, fake)? {
        Some(p) => {
            let pv = g.value(p).item();
            ensure_finite(pv, iteration, "critic penalty")?;
            (g.sub(loss, p)?, pv)
        }
        None => (loss, 0.0),
    };
    let neg = g.scale(total, -1.0);
    let grads = g.backward(neg, &bound.vars(), false)?;
    let mut grads: Vec<Tensor> = grads.iter().map(|v| g.value(*v).clone()).collect();
    ensure_finite_grads(&grads, iteration, "critic gradient")?;
    inject_gradient_noise(&mut grads, config.gradient_noise, noise_rng)?;
    adam.step(&mut critic.params, &grads, config.lr_critic, &config.adam)?;
    Ok(CriticStep { penalty })
}

fn gumbel_for(generator: &Mlp, rows: usize, rng: &mut impl Rng) -> Option<Tensor> {
    match &generator.spec.head {
        OutputHead::Tabular(h) => Some(draw_gumbel(rows, h, rng)),
        _ => None,
    }
}

/// Runs the alternating updates for `config.iterations` outer iterations.
///
/// Each iteration draws one tempered batch and one set of reference noise,
/// takes `critic_steps` critic ascent steps, then one generator descent step.
pub fn train(
    config: &TrainConfig,
    data: &TrainingData,
    mut critic: Mlp,
    mut generator: Mlp,
    observer: &mut dyn TrainObserver,
) -> Result<Trained> {
    config.validate()?;
    if generator.spec.input_dim != config.noise_dim {
        return Err(Error::Config(format!(
            "generator takes {} noise inputs but noise_dim is {}",
            generator.spec.input_dim, config.noise_dim
        )));
    }
    if critic.spec.input_dim != data.dim() || generator.spec.output_dim != data.dim() {
        return Err(Error::Config(format!(
            "network widths do not match the {}-column data",
            data.dim()
        )));
    }
    if config.loss.critic_head() != critic.spec.head {
        return Err(Error::Config(format!("{:?} loss needs a {:?} critic head", config.loss, config.loss.critic_head())));
    }
    let dist = config.alpha_dist()?;
    let mut rng = stream_rng(config.seed, streams::BATCH);
    let mut noise_rng = stream_rng(config.seed, streams::GRADIENT_NOISE);
    let mut adam_d = AdamState::new(&critic.params);
    let mut adam_g = AdamState::new(&generator.params);
    let stride = config.stride();
    let started = std::time::Instant::now();
    let mut metrics = Vec::new();

    for it in 0..config.iterations {
        let batch = data.batch(config.batch_size, dist, config.noise_dim, &mut rng)?;
        let z = batch.generator_noise(config.interpolated_noise).clone();
        let gumbel = gumbel_for(&generator, batch.len(), &mut rng);
        let fake = {
            let mut g = Graph::new();
            let bound = generator.bind(&mut g);
            let zv = g.leaf(z.clone());
            let out = generator_forward_with_noise(&mut g, &generator, &bound, zv, &batch.alpha1, gumbel.as_ref())?;
            g.value(out.output).clone()
        };
        let checkpoint = (it + 1) % stride == 0;
        let stats = if checkpoint {
            Some(batch_statistics(
                &critic,
                config.loss,
                &batch.q1,
                &batch.alpha1,
                &fake,
                &batch.alpha1,
                config.grad_scope,
            )?)
        } else {
            None
        };
        let mut step = CriticStep { penalty: 0.0 };
        for _ in 0..config.critic_steps {
            step = critic_step(config, &mut critic, &mut adam_d, &batch, &fake, it, &mut noise_rng)?;
        }

        let mut g = Graph::new();
        let bd = critic.bind(&mut g);
        let bg = generator.bind(&mut g);
        let zv = g.leaf(z);
        let out = generator_forward_with_noise(&mut g, &generator, &bg, zv, &batch.alpha1, gumbel.as_ref())?.output;
        let df = critic_forward(&mut g, &critic, &bd, out, &batch.alpha1)?.output;
        let mut gl = generator_loss(&mut g, config.loss, df)?;
        let generator_objective = g.value(gl).item();
        ensure_finite(generator_objective, it, "generator loss")?;
        if let Some(f) = config.fairness.filter(|f| it >= f.start_iteration) {
            let p = fairness_penalty(&mut g, out, f.label_col, f.sensitive_col, f.lambda)?;
            gl = g.add(gl, p)?;
        }
        let grads = g.backward(gl, &bg.vars(), false)?;
        let grads: Vec<Tensor> = grads.iter().map(|v| g.value(*v).clone()).collect();
        ensure_finite_grads(&grads, it, "generator gradient")?;
        adam_g.step(&mut generator.params, &grads, config.lr_generator, &config.adam)?;

        if let Some(stats) = stats {
            let eval = observer.evaluate(it + 1, &generator)?;
            let record = MetricsRecord {
                v: METRICS_VERSION.into(),
                iteration: it + 1,
                critic_loss: stats.mean_loss,
                loss_var: stats.loss_var,
                grad_var_trace: stats.grad_var_trace,
                penalty: step.penalty,
                generator_loss: generator_objective,
                critic_norms: critic.params.weight_norms(),
                generator_norms: generator.params.weight_norms(),
                eval,
                wall_time: observer.timed().then(|| started.elapsed().as_secs_f64()),
            };
            observer.record(&record)?;
            metrics.push(record);
        }
    }
    Ok(Trained {
        critic,
        generator,
        metrics,
    })
}

/// Draws `n` generator samples at temperature `alpha`, with interpolated
/// reference noise when `interpolated` is set.
pub fn generate(generator: &Mlp, n: usize, alpha: f64, interpolated: bool, rng: &mut impl Rng) -> Result<Tensor> {
    let d_z = generator.spec.input_dim;
    let z = sample_noise(n, d_z, rng);
    let z = if interpolated {
        let zp = sample_noise(n, d_z, rng);
        interpolate(&vec![alpha; n], &z, &zp)?
    } else {
        z
    };
    let alphas = vec![alpha; n];
    let gumbel = gumbel_for(generator, n, rng);
    let mut g = Graph::new();
    let bound = generator.bind(&mut g);
    let zv = g.leaf(z);
    let out = generator_forward_with_noise(&mut g, generator, &bound, zv, &alphas, gumbel.as_ref())?;
    Ok(g.value(out.output).clone())
}
