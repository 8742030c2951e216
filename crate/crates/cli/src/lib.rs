//! Command-line driver. `main` only parses arguments and maps the result of
//! [`run`] to an exit code.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use ptgan_core::data::{numeric_samples, RawTable, TabularEncoder};
use ptgan_core::evalmetrics::w1_distance;
use ptgan_core::experiment::{
    evaluate_downstream, run_fairgen, run_georepair, run_probe, run_train, DatasetConfig, ExperimentConfig,
    ProbeKind, TabularData,
};
use ptgan_core::{Error, Result};

/// Success.
pub const EXIT_OK: i32 = 0;
/// Invalid configuration, arguments or input data.
pub const EXIT_INPUT: i32 = 2;
/// Training hit a NaN or infinity and was aborted.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ptgan", version, about = "Parallelly tempered GAN experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the commands that read an experiment config.
#[derive(Debug, clap::Args)]
pub struct Common {
    /// Experiment config (TOML). Omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "runs/out")]
    pub out: PathBuf,
    /// Base seed; replicate `i` uses `seed + i`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one or more replicates and write run directories.
    Train {
        #[command(flatten)]
        common: Common,
        /// Temperatures of the final sample dump, comma separated.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Variance probes: fixed-generator, variance-reduction or noise-injection.
    Probe {
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Train a fair generator and score data sets over a temperature grid.
    Fairgen {
        #[command(flatten)]
        common: Common,
        /// Temperature grid within [0.5, 1], comma separated.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Geometric repair of the continuous columns at several strengths.
    Georepair {
        #[command(flatten)]
        common: Common,
        /// Repair this CSV instead of the configured dataset file (same schema).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Repair strengths in [0, 1], comma separated.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// 1-Wasserstein distance between two numeric sample CSVs.
    EvalW1 {
        a: PathBuf,
        b: PathBuf,
        /// Keep only rows whose trailing `alpha` equals this value; files
        /// without the column are used whole.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Fit the downstream classifier on one CSV and score it on another.
    Downstream {
        /// Config naming the tabular schema.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.train.seed = s;
        cfg.probe.seed = s;
    }
    if let Some(r) = common.replicates {
        cfg.replicates = r;
    }
    Ok(cfg)
}

fn print(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json values serialize"));
}

/// Rows of a numeric sample file, restricted to one temperature when the
/// file records temperatures.
fn samples_at(path: &Path, alpha: Option<f64>) -> Result<ptgan_core::autodiff::Tensor> {
    let (_, x, alphas) = numeric_samples(&RawTable::read_csv(path)?)?;
    let (Some(a), Some(alphas)) = (alpha, alphas) else { return Ok(x) };
    let keep: Vec<usize> = (0..x.rows()).filter(|&i| alphas[i] == a).collect();
    if keep.is_empty() {
        return Err(Error::Config(format!("{} has no rows at alpha {a}", path.display())));
    }
    Ok(x.select_rows(&keep))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, alphas } => {
            let mut cfg = load_config(&common)?;
            if let Some(a) = alphas {
                cfg.samples.alphas = a;
            }
            let summaries = run_train(&cfg, &common.out)?;
            print(json!({ "out": common.out, "replicates": summaries }));
        }
        Command::Probe { kind, common } => {
            let kind: ProbeKind = kind.parse()?;
            let cfg = load_config(&common)?;
            let arms = run_probe(kind, &cfg, &common.out)?;
            let rows: Vec<_> = arms
                .iter()
                .map(|a| {
                    json!({
                        "arm": a.arm,
                        "replicate": a.replicate,
                        "metrics": a.path,
                        "loss_var": a.last.as_ref().map(|m| m.loss_var),
                        "grad_var_trace": a.last.as_ref().map(|m| m.grad_var_trace),
                        "log_w1": a.log_w1,
                    })
                })
                .collect();
            print(json!({ "kind": kind.to_string(), "out": common.out, "arms": rows }));
        }
        Command::Fairgen { common, alphas } => {
            let mut cfg = load_config(&common)?;
            if let Some(a) = alphas {
                cfg.fair.alphas = a;
            }
            let rows = run_fairgen(&cfg, &common.out)?;
            print(json!({ "out": common.out, "rows": rows }));
        }
        Command::Georepair { common, input, lambdas } => {
            let mut cfg = load_config(&common)?;
            if let Some(l) = lambdas {
                cfg.repair.lambdas = l;
            }
            if let Some(p) = input {
                match &mut cfg.dataset {
                    DatasetConfig::Csv { path, .. } => *path = p,
                    _ => return Err(Error::Config("--input needs a csv dataset in the config".into())),
                }
            }
            let rows = run_georepair(&cfg, &common.out)?;
            print(json!({ "out": common.out, "rows": rows }));
        }
        Command::EvalW1 { a, b, alpha } => {
            let r = w1_distance(&samples_at(&a, alpha)?, &samples_at(&b, alpha)?)?;
            print(json!(r));
        }
        Command::Downstream { config, train, test } => {
            let cfg = ExperimentConfig::load(&config)?;
            let schema = cfg
                .dataset
                .schema()?
                .ok_or_else(|| Error::Config("downstream needs a tabular schema in the config".into()))?;
            let train_table = RawTable::read_csv(&train)?;
            let test_table = RawTable::read_csv(&test)?;
            let encoder = TabularEncoder::fit(&schema, &train_table)?;
            let data = TabularData {
                train: encoder.transform(&train_table)?,
                test: encoder.transform(&test_table)?,
                encoder,
                table: train_table,
            };
            let score = evaluate_downstream(&data, &data.train, &data.test, !cfg.eval.include_sensitive)?;
            print(json!(score));
        }
    }
    Ok(())
}
