//! Run directories, replicates, and the glue between a declarative config,
//! the data sets, the trainer and the evaluation metrics.
//!
//! A training run directory holds:
//!
//! ```text
//! config.toml      resolved config of the whole invocation
//! rep-000/
//!   config.toml    frozen single-replicate config (re-running it reproduces the run)
//!   metrics.jsonl  one MetricsRecord per checkpoint
//!   samples.csv    final generator samples, trailing `alpha` column
//!   critic.ckpt
//!   generator.ckpt
//!   summary.json
//! ```

mod config;
mod fair;
mod probe;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    DatasetConfig, EvalConfig, ExperimentConfig, FairConfig, FairMethod, NetConfig, ProbeArms, RepairConfig,
    SamplesConfig,
};
pub use fair::{
    evaluate_downstream, fair_train_config, frontier_rows, read_rows, repair_table, run_fairgen, run_georepair, write_rows, tabular_downstream, DownstreamRow,
    FAIRGEN_TABLE, FRONTIER_TABLE, REPAIR_TABLE,
};
pub use probe::{left_mode, probe_arm, probe_critic, probe_data, run_probe, ArmResult, ProbeKind};

use crate::autodiff::Tensor;
use crate::checkpoint;
use crate::data::{
    planted_discrimination, sample_mixture, split_indices, write_samples, write_table_samples, MixtureSpec, RawTable,
    TabularEncoder,
};
use crate::error::{Error, Result};
use crate::evalmetrics::{mode_coverage, s_t_score, w1_distance};
use crate::nets::{Mlp, MlpSpec, OutputHead};
use crate::trainer::{
    generate, stream_rng, streams, train, EvalScores, MetricsRecord, Trained, TrainConfig, TrainObserver, TrainingData,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CRITIC_CHECKPOINT: &str = "critic.ckpt";
pub const GENERATOR_CHECKPOINT: &str = "generator.ckpt";

/// Mode-coverage radius in units of the mixture σ.
pub const COVERAGE_RADIUS_SIGMAS: f64 = 4.0;

/// Stream of the dataset seed used for the fixed W1 reference sample.
const REFERENCE_STREAM: u64 = 1;

/// Toy mixture with its training rows and a fixed reference sample.
#[derive(Clone, Debug)]
pub struct ToyData {
    pub spec: MixtureSpec,
    pub train: Tensor,
    pub reference: Tensor,
}

/// Encoded table with its train/test split.
#[derive(Clone, Debug)]
pub struct TabularData {
    pub encoder: TabularEncoder,
    pub table: RawTable,
    pub train: Tensor,
    pub test: Tensor,
}

#[derive(Clone, Debug)]
pub enum Prepared {
    Toy(ToyData),
    Tabular(TabularData),
}

impl Prepared {
    pub fn train_rows(&self) -> &Tensor {
        match self {
            Prepared::Toy(t) => &t.train,
            Prepared::Tabular(t) => &t.train,
        }
    }
}

fn data_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Encodes a table and splits it with the dataset seed.
pub fn prepare_table(table: RawTable, cfg: &ExperimentConfig, split: f64, seed: u64) -> Result<TabularData> {
    let schema = cfg.dataset.schema()?.expect("tabular dataset has a schema");
    let encoder = TabularEncoder::fit(&schema, &table)?;
    let x = encoder.transform(&table)?;
    let (tr, te) = split_indices(x.rows(), split, seed)?;
    if tr.is_empty() || te.is_empty() {
        return Err(Error::Config(format!("split {split} of {} rows leaves an empty part", x.rows())));
    }
    Ok(TabularData {
        encoder,
        train: x.select_rows(&tr),
        test: x.select_rows(&te),
        table,
    })
}

/// Loads or samples the configured dataset.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let toy = |spec: MixtureSpec, n: usize, seed: u64| -> Result<Prepared> {
        let train = sample_mixture(&spec, n, &mut data_rng(seed))?;
        let reference = sample_mixture(&spec, cfg.eval.n, &mut stream_rng(seed, REFERENCE_STREAM))?;
        Ok(Prepared::Toy(ToyData { spec, train, reference }))
    };
    match &cfg.dataset {
        DatasetConfig::Ring8 { n, seed } => toy(MixtureSpec::ring8(), *n, *seed),
        DatasetConfig::Two1d { mu2, n, seed } => toy(MixtureSpec::two1d(*mu2), *n, *seed),
        DatasetConfig::Mixture { mixture, n, seed } => toy(mixture.clone(), *n, *seed),
        DatasetConfig::Csv { path, split, seed, .. } => {
            let table = RawTable::read_csv(path)?;
            Ok(Prepared::Tabular(prepare_table(table, cfg, *split, *seed)?))
        }
        DatasetConfig::Planted {
            n,
            shift,
            direct,
            effect,
            split,
            seed,
        } => {
            let table = planted_discrimination(*n, *shift, *direct, *effect, &mut data_rng(*seed));
            Ok(Prepared::Tabular(prepare_table(table, cfg, *split, *seed)?))
        }
    }
}

/// Generator output head for the prepared data.
pub fn generator_head(cfg: &ExperimentConfig, data: &Prepared) -> OutputHead {
    match data {
        Prepared::Toy(_) => OutputHead::Linear,
        Prepared::Tabular(t) => OutputHead::Tabular(t.encoder.head_spec(cfg.gumbel_tau)),
    }
}

pub fn network_specs(cfg: &ExperimentConfig, train: &TrainConfig, data: &Prepared) -> Result<(MlpSpec, MlpSpec)> {
    let tabular = matches!(data, Prepared::Tabular(_));
    let dim = data.train_rows().cols();
    let critic = MlpSpec::uniform(
        dim,
        cfg.critic.widths(tabular),
        cfg.critic.activation,
        1,
        train.loss.critic_head(),
    )?;
    let generator = MlpSpec::uniform(
        train.noise_dim,
        cfg.generator.widths(tabular),
        cfg.generator.activation,
        dim,
        generator_head(cfg, data),
    )?;
    Ok((critic, generator))
}

/// Freshly initialized critic and generator; init seeds come from the
/// run seed's own stream.
pub fn build_nets(cfg: &ExperimentConfig, train: &TrainConfig, data: &Prepared) -> Result<(Mlp, Mlp)> {
    let (cs, gs) = network_specs(cfg, train, data)?;
    let mut rng = stream_rng(train.seed, streams::INIT);
    let (seed_c, seed_g): (u64, u64) = (rng.random(), rng.random());
    Ok((Mlp::new(cs, seed_c)?, Mlp::new(gs, seed_g)?))
}

/// One config per replicate: seed `train.seed + i`, `replicates = 1`.
pub fn replicate_configs(cfg: &ExperimentConfig) -> Vec<ExperimentConfig> {
    (0..cfg.replicates)
        .map(|i| {
            let mut c = cfg.clone();
            c.replicates = 1;
            c.train.seed = cfg.train.seed.wrapping_add(i as u64);
            c.probe.seed = cfg.probe.seed.wrapping_add(i as u64);
            c
        })
        .collect()
}

pub fn replicate_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("rep-{i:03}"))
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_text(&dir.join(CONFIG_FILE), &cfg.to_toml()?)
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes metrics lines as they arrive.
pub struct MetricsSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsSink {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(f),
        })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        let line = record.to_json_line()?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut sink = MetricsSink::create(path)?;
    records.iter().try_for_each(|r| sink.write(r))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(MetricsRecord::from_json_line)
        .collect()
}

/// Checkpoint-time scoring of the generator at `α = 1`.
pub struct RunObserver<'a> {
    data: &'a Prepared,
    eval: EvalConfig,
    interpolated: bool,
    rng: ChaCha8Rng,
    sink: Option<MetricsSink>,
}

impl<'a> RunObserver<'a> {
    pub fn new(cfg: &ExperimentConfig, data: &'a Prepared, sink: Option<MetricsSink>) -> Self {
        Self {
            data,
            eval: cfg.eval.clone(),
            interpolated: cfg.train.interpolated_noise,
            rng: stream_rng(cfg.train.seed, streams::EVAL),
            sink,
        }
    }
}

impl TrainObserver for RunObserver<'_> {
    fn evaluate(&mut self, _iteration: usize, generator: &Mlp) -> Result<EvalScores> {
        if !self.eval.enabled {
            return Ok(EvalScores::default());
        }
        let x = generate(generator, self.eval.n, 1.0, self.interpolated, &mut self.rng)?;
        match self.data {
            Prepared::Toy(t) => {
                let cov = mode_coverage(&x, &t.spec.centers_tensor(), COVERAGE_RADIUS_SIGMAS * t.spec.sigma)?;
                Ok(EvalScores {
                    w1: Some(w1_distance(&x, &t.reference)?.value),
                    modes_covered: Some(cov.covered),
                    ..Default::default()
                })
            }
            Prepared::Tabular(t) => {
                let score = tabular_downstream(t, &x, !self.eval.include_sensitive);
                Ok(EvalScores {
                    auc: score.as_ref().map(|s| s.auc),
                    sp: score.as_ref().map(|s| s.sp),
                    ..Default::default()
                })
            }
        }
    }

    fn record(&mut self, record: &MetricsRecord) -> Result<()> {
        match &mut self.sink {
            Some(s) => s.write(record),
            None => Ok(()),
        }
    }
}

/// Outcome of one replicate, also written as `summary.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub iterations: usize,
    pub checkpoints: usize,
    /// Evaluation at the last checkpoint.
    pub last: EvalScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_w1: Option<f64>,
    /// AUC of the downstream model fit on the real training split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_auc: Option<f64>,
    /// Late-half AUC gap to `real_auc` over the checkpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_t_auc: Option<f64>,
}

impl RunSummary {
    pub fn from_metrics(cfg: &ExperimentConfig, data: &Prepared, metrics: &[MetricsRecord]) -> Result<Self> {
        let last = metrics.last().map(|m| m.eval.clone()).unwrap_or_default();
        let mut s = RunSummary {
            seed: cfg.train.seed,
            iterations: cfg.train.iterations,
            checkpoints: metrics.len(),
            log_w1: last.w1.map(f64::ln),
            last,
            ..Default::default()
        };
        if let Prepared::Tabular(t) = data {
            if cfg.eval.enabled {
                s.real_auc = tabular_downstream(t, &t.train, !cfg.eval.include_sensitive).map(|d| d.auc);
                let series: Option<Vec<f64>> = metrics.iter().map(|m| m.eval.auc).collect();
                if let (Some(real), Some(series)) = (s.real_auc, series) {
                    if series.len() >= 2 {
                        s.s_t_auc = Some(s_t_score(real, &series)?);
                    }
                }
            }
        }
        Ok(s)
    }
}

/// Final samples at every configured temperature, stacked in order.
pub fn final_samples(cfg: &ExperimentConfig, generator: &Mlp) -> Result<(Tensor, Vec<f64>)> {
    let mut rng = stream_rng(cfg.train.seed, streams::SAMPLES);
    let mut parts = Vec::new();
    let mut alphas = Vec::new();
    for &a in &cfg.samples.alphas {
        parts.push(generate(generator, cfg.samples.n, a, cfg.train.interpolated_noise, &mut rng)?);
        alphas.extend(std::iter::repeat_n(a, cfg.samples.n));
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Ok((Tensor::vstack(&refs)?, alphas))
}

/// Writes generated rows, decoded to the original columns for tables.
pub fn write_generated(path: &Path, data: &Prepared, x: &Tensor, alpha: &[f64]) -> Result<()> {
    match data {
        Prepared::Toy(_) => {
            let names: Vec<String> = (1..=x.cols()).map(|k| format!("x{k}")).collect();
            write_samples(path, &names, x, alpha)
        }
        Prepared::Tabular(t) => write_table_samples(path, &t.encoder.inverse_transform(x)?, alpha),
    }
}

/// Trains one replicate into `dir` using `training` for the rows.
pub fn run_one(
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
    data: &Prepared,
    training: &TrainingData,
    dir: &Path,
) -> Result<(RunSummary, Trained)> {
    create_dir(dir)?;
    write_config(dir, cfg)?;
    let (critic, generator) = build_nets(cfg, train_cfg, data)?;
    let sink = MetricsSink::create(&dir.join(METRICS_FILE))?;
    let mut obs = RunObserver::new(cfg, data, Some(sink));
    let trained = train(train_cfg, training, critic, generator, &mut obs)?;
    checkpoint::save(&dir.join(CRITIC_CHECKPOINT), &trained.critic.params)?;
    checkpoint::save(&dir.join(GENERATOR_CHECKPOINT), &trained.generator.params)?;
    let (x, alpha) = final_samples(cfg, &trained.generator)?;
    write_generated(&dir.join(SAMPLES_FILE), data, &x, &alpha)?;
    let summary = RunSummary::from_metrics(cfg, data, &trained.metrics)?;
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    log::info!(
        "{}: seed {} done, last eval {:?}",
        dir.display(),
        cfg.train.seed,
        summary.last
    );
    Ok((summary, trained))
}

/// Runs every replicate of a plain training config, in parallel, into
/// `out/rep-XXX`.
pub fn run_train(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    create_dir(out)?;
    write_config(out, cfg)?;
    let data = prepare(cfg)?;
    let training = TrainingData::Pool(data.train_rows().clone());
    replicate_configs(cfg)
        .par_iter()
        .enumerate()
        .map(|(i, rc)| Ok(run_one(rc, &rc.train, &data, &training, &replicate_dir(out, i))?.0))
        .collect()
}
