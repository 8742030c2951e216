//! Fair data generation across temperatures, the penalized baseline, and
//! geometric repair, all scored by a downstream classifier on real test rows.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    create_dir, network_specs, prepare, prepare_table, replicate_configs, replicate_dir, run_one, write_config,
    write_table_samples, ExperimentConfig, FairMethod, Prepared, TabularData,
};
use crate::autodiff::Tensor;
use crate::checkpoint;
use crate::data::{ColumnType, RawTable};
use crate::error::{Error, Result};
use crate::evalmetrics::{downstream_score, geo_repair, pareto_frontier, DownstreamScore};
use crate::nets::Mlp;
use crate::objectives::{LossKind, PenaltyKind};
use crate::tempering::GroupedData;
use crate::trainer::{generate, stream_rng, streams, FairnessPenaltyConfig, TrainConfig, TrainingData};

pub const FAIRGEN_TABLE: &str = "fairgen.csv";
pub const FRONTIER_TABLE: &str = "frontier.csv";
pub const REPAIR_TABLE: &str = "georepair.csv";

/// One scored data set. `param` is the temperature for generated sets and
/// the repair strength for repaired ones. Scores are empty when the data set
/// could not be scored (for instance a single generated class).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamRow {
    pub method: String,
    pub replicate: usize,
    pub param: f64,
    pub set: usize,
    pub auc: Option<f64>,
    pub sp: Option<f64>,
}

/// Fits the downstream model on encoded `train` rows and scores it on
/// encoded `test` rows of the same encoder.
pub fn evaluate_downstream(t: &TabularData, train: &Tensor, test: &Tensor, drop_sensitive: bool) -> Result<DownstreamScore> {
    let enc = &t.encoder;
    let (x, y, _) = enc.supervised(train, drop_sensitive)?;
    let (xt, yt, at) = enc.supervised(test, drop_sensitive)?;
    let at = at.ok_or_else(|| Error::Config("schema names no sensitive column".into()))?;
    downstream_score(&x, &y, &xt, &yt, &at)
}

/// Downstream score of a model trained on `train` and tested on the real
/// test split, or `None` when it cannot be computed.
pub fn tabular_downstream(t: &TabularData, train: &Tensor, drop_sensitive: bool) -> Option<DownstreamScore> {
    evaluate_downstream(t, train, &t.test, drop_sensitive)
        .map_err(|e| log::debug!("downstream scoring skipped: {e}"))
        .ok()
}

fn tabular(data: Prepared) -> Result<TabularData> {
    match data {
        Prepared::Tabular(t) => {
            let s = &t.encoder.schema;
            if s.sensitive.is_none() || s.label.is_none() {
                return Err(Error::Config("fair evaluation needs both a sensitive and a label column".into()));
            }
            Ok(t)
        }
        Prepared::Toy(_) => Err(Error::Config("fair evaluation needs a tabular dataset".into())),
    }
}

/// Rows of `rows` on the `(auc, sp)` Pareto frontier, ordered by AUC.
pub fn frontier_rows(rows: &[DownstreamRow]) -> Vec<DownstreamRow> {
    let scored: Vec<&DownstreamRow> = rows.iter().filter(|r| r.auc.is_some() && r.sp.is_some()).collect();
    let points: Vec<(f64, f64)> = scored.iter().map(|r| (r.auc.unwrap(), r.sp.unwrap())).collect();
    pareto_frontier(&points).into_iter().map(|i| scored[i].clone()).collect()
}

pub fn write_rows(path: &Path, rows: &[DownstreamRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<DownstreamRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Training schedule of the configured fair method.
///
/// Tempered training swaps in `fair.r`. The penalized baseline runs WGAN-GP
/// for `T` iterations and then `T/2` more with the generator fairness
/// penalty on the soft label and sensitive columns.
pub fn fair_train_config(cfg: &ExperimentConfig, t: &TabularData) -> Result<TrainConfig> {
    let mut tc = cfg.train.clone();
    match cfg.fair.method {
        FairMethod::Ptgan => tc.r = cfg.fair.r,
        FairMethod::Fairwgangp => {
            let schema = &t.encoder.schema;
            // The second level (offset + 1) of each binary block reads as 1.
            let col = |name: &Option<String>| t.encoder.block(name.as_deref().unwrap_or_default()).map(|b| b.offset + 1);
            let (Some(label_col), Some(sensitive_col)) = (col(&schema.label), col(&schema.sensitive)) else {
                return Err(Error::Config("fair baseline needs label and sensitive columns".into()));
            };
            tc.loss = LossKind::Nd;
            tc.penalty = PenaltyKind::Gp { lambda: 10.0 };
            tc.r = 1.0;
            tc.fairness = Some(FairnessPenaltyConfig {
                lambda: cfg.fair.lambda_f,
                label_col,
                sensitive_col,
                start_iteration: cfg.train.iterations,
            });
            tc.iterations = cfg.train.iterations + cfg.train.iterations / 2;
        }
    }
    Ok(tc)
}

fn method_name(m: FairMethod) -> &'static str {
    match m {
        FairMethod::Ptgan => "fairptgan",
        FairMethod::Fairwgangp => "fairwgangp",
    }
}

fn fair_replicate(cfg: &ExperimentConfig, data: &Prepared, t: &TabularData, i: usize, dir: &Path) -> Result<Vec<DownstreamRow>> {
    let tc = fair_train_config(cfg, t)?;
    let generator = match &cfg.fair.generator_checkpoint {
        Some(path) => {
            create_dir(dir)?;
            write_config(dir, cfg)?;
            let (_, spec) = network_specs(cfg, &tc, data)?;
            Mlp::from_parts(spec, checkpoint::load(path)?)?
        }
        None => {
            let training = match cfg.fair.method {
                FairMethod::Ptgan => {
                    let sensitive = t.encoder.schema.sensitive.as_deref().unwrap_or_default();
                    let groups: Vec<u8> = t.encoder.binary_column(&t.train, sensitive)?.into_iter().map(u8::from).collect();
                    TrainingData::Grouped(GroupedData::split(&t.train, &groups)?)
                }
                FairMethod::Fairwgangp => TrainingData::Pool(t.train.clone()),
            };
            run_one(cfg, &tc, data, &training, dir)?.1.generator
        }
    };
    let alphas = match cfg.fair.method {
        FairMethod::Ptgan => cfg.fair.alphas.clone(),
        FairMethod::Fairwgangp => vec![1.0],
    };
    let mut rng = stream_rng(cfg.train.seed, streams::SAMPLES);
    let n = t.train.rows();
    let mut rows = Vec::new();
    for &alpha in &alphas {
        for set in 0..cfg.fair.sets_per_alpha {
            let x = generate(&generator, n, alpha, cfg.train.interpolated_noise, &mut rng)?;
            let decoded = t.encoder.inverse_transform(&x)?;
            write_table_samples(&dir.join(format!("alpha-{alpha}-set-{set}.csv")), &decoded, &vec![alpha; n])?;
            let score = tabular_downstream(t, &x, !cfg.eval.include_sensitive);
            if score.is_none() {
                log::warn!("{}: alpha {alpha} set {set} could not be scored", dir.display());
            }
            rows.push(DownstreamRow {
                method: method_name(cfg.fair.method).into(),
                replicate: i,
                param: alpha,
                set,
                auc: score.as_ref().map(|s| s.auc),
                sp: score.as_ref().map(|s| s.sp),
            });
        }
    }
    write_rows(&dir.join(FAIRGEN_TABLE), &rows)?;
    Ok(rows)
}

/// Trains (or loads) a fair generator per replicate, generates data sets
/// over the temperature grid and scores each downstream. Writes per-set
/// CSVs, `fairgen.csv` and `frontier.csv`.
pub fn run_fairgen(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<DownstreamRow>> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let t = tabular(data.clone())?;
    create_dir(out)?;
    write_config(out, cfg)?;
    let per_rep: Vec<Vec<DownstreamRow>> = replicate_configs(cfg)
        .par_iter()
        .enumerate()
        .map(|(i, rc)| fair_replicate(rc, &data, &t, i, &replicate_dir(out, i)))
        .collect::<Result<_>>()?;
    let rows: Vec<DownstreamRow> = per_rep.into_iter().flatten().collect();
    write_rows(&out.join(FAIRGEN_TABLE), &rows)?;
    write_rows(&out.join(FRONTIER_TABLE), &frontier_rows(&rows))?;
    Ok(rows)
}

/// Applies geometric repair to every continuous column of `table`, keeping
/// the original text of cells whose value does not change.
pub fn repair_table(table: &RawTable, t: &TabularData, lambda: f64) -> Result<RawTable> {
    let schema = &t.encoder.schema;
    let sensitive = schema
        .sensitive
        .as_deref()
        .ok_or_else(|| Error::Config("repair needs a sensitive column".into()))?;
    let groups = t.encoder.binary_column(&t.encoder.transform(table)?, sensitive)?;
    let mut out = table.clone();
    for c in schema.columns.iter().filter(|c| c.kind == ColumnType::Continuous) {
        let j = table
            .column_index(&c.name)
            .ok_or_else(|| Error::Config(format!("column {:?} missing", c.name)))?;
        let values: Vec<f64> = table
            .rows
            .iter()
            .map(|r| r[j].parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("column {:?}: {e}", c.name)))?;
        let repaired = geo_repair(&values, &groups, lambda)?;
        for ((row, v), r) in out.rows.iter_mut().zip(&values).zip(repaired) {
            if r != *v {
                row[j] = r.to_string();
            }
        }
    }
    Ok(out)
}

/// Repairs the whole table at every configured strength, then splits it
/// with the dataset seed and scores the downstream model on the repaired
/// test rows. Writes `lambda-<λ>.csv` per strength and `georepair.csv`.
pub fn run_georepair(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<DownstreamRow>> {
    cfg.validate()?;
    let t = tabular(prepare(cfg)?)?;
    let (split, seed) = cfg.dataset.split_seed().expect("tabular dataset");
    if !t.encoder.schema.columns.iter().any(|c| c.kind == ColumnType::Continuous) {
        log::warn!("no continuous columns: repair leaves the data unchanged");
    }
    create_dir(out)?;
    write_config(out, cfg)?;
    let mut rows = Vec::new();
    for &lambda in &cfg.repair.lambdas {
        let repaired = repair_table(&t.table, &t, lambda)?;
        repaired.write_csv(&out.join(format!("lambda-{lambda}.csv")))?;
        let rt = prepare_table(repaired, cfg, split, seed)?;
        let score = evaluate_downstream(&rt, &rt.train, &rt.test, !cfg.eval.include_sensitive)?;
        rows.push(DownstreamRow {
            method: "georepair".into(),
            replicate: 0,
            param: lambda,
            set: 0,
            auc: Some(score.auc),
            sp: Some(score.sp),
        });
    }
    write_rows(&out.join(REPAIR_TABLE), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalmetrics::w1_sorted_1d;
    use crate::experiment::{DatasetConfig, FairConfig};

    fn planted(n: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset = DatasetConfig::Planted {
            n,
            shift: 1.0,
            direct: 1.0,
            effect: 1.0,
            split: 0.8,
            seed: 9,
        };
        cfg.critic.hidden = Some(vec![8]);
        cfg.generator.hidden = Some(vec![8]);
        cfg.train.iterations = 10;
        cfg.train.batch_size = 20;
        cfg.eval.enabled = false;
        cfg
    }

    #[test]
    fn fairgen_writes_one_row_per_set() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = planted(300);
        cfg.fair = FairConfig {
            alphas: vec![1.0, 0.5],
            sets_per_alpha: 2,
            ..Default::default()
        };
        let rows = run_fairgen(&cfg, dir.path()).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(read_rows(&dir.path().join(FAIRGEN_TABLE)).unwrap(), rows);
        assert!(dir.path().join(FRONTIER_TABLE).is_file());
        let set = RawTable::read_csv(&replicate_dir(dir.path(), 0).join("alpha-0.5-set-1.csv")).unwrap();
        assert_eq!(set.rows.len(), 240);
        assert_eq!(set.header.last().unwrap(), "alpha");
    }

    #[test]
    fn baseline_appends_a_penalized_half_phase() {
        let cfg = planted(100);
        let t = tabular(prepare(&cfg).unwrap()).unwrap();
        let mut c = cfg.clone();
        c.fair.method = FairMethod::Fairwgangp;
        let tc = fair_train_config(&c, &t).unwrap();
        assert_eq!(tc.iterations, 15);
        assert_eq!(tc.penalty, PenaltyKind::Gp { lambda: 10.0 });
        let f = tc.fairness.unwrap();
        assert_eq!(f.start_iteration, 10);
        // planted layout: c1, c2, a(0,1), y(0,1)
        assert_eq!((f.sensitive_col, f.label_col), (3, 5));
        assert_eq!(fair_train_config(&cfg, &t).unwrap().r, 0.2);
    }

    #[test]
    fn fair_runs_need_a_table() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run_fairgen(&ExperimentConfig::default(), dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn repair_extremes() {
        let cfg = planted(400);
        let t = tabular(prepare(&cfg).unwrap()).unwrap();
        assert_eq!(repair_table(&t.table, &t, 0.0).unwrap(), t.table);
        let full = repair_table(&t.table, &t, 1.0).unwrap();
        let a = t.table.column_index("a").unwrap();
        for name in ["c1", "c2"] {
            let j = t.table.column_index(name).unwrap();
            let pick = |g: &str| -> Vec<f64> { full.rows.iter().filter(|r| r[a] == g).map(|r| r[j].parse().unwrap()).collect() };
            let (g0, g1) = (pick("0"), pick("1"));
            // Unequal group sizes: the quantile functions only agree on the
            // coarser grid, so the distance shrinks without vanishing.
            let before = {
                let p = |g: &str| -> Vec<f64> { t.table.rows.iter().filter(|r| r[a] == g).map(|r| r[j].parse().unwrap()).collect() };
                w1_sorted_1d(&p("0"), &p("1"))
            };
            assert!(w1_sorted_1d(&g0, &g1) < 0.5 * before, "{name}");
        }
    }

    #[test]
    fn georepair_scores_every_strength() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = planted(400);
        let rows = run_georepair(&cfg, dir.path()).unwrap();
        assert_eq!(rows.iter().map(|r| r.param).collect::<Vec<_>>(), [0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(rows.iter().all(|r| r.auc.unwrap() > 0.5));
        let zero = RawTable::read_csv(&dir.path().join("lambda-0.csv")).unwrap();
        assert_eq!(zero, prepare_table_free(&cfg));
    }

    fn prepare_table_free(cfg: &ExperimentConfig) -> RawTable {
        tabular(prepare(cfg).unwrap()).unwrap().table
    }
}
