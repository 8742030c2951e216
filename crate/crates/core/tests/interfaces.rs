//! File formats read by the report scripts: `metrics.jsonl` (v1) and
//! `samples.csv` with a trailing `alpha` column.

use ptgan_core::data::RawTable;
use ptgan_core::experiment::{replicate_dir, run_train, DatasetConfig, ExperimentConfig, METRICS_FILE, SAMPLES_FILE};

fn tiny(dataset: DatasetConfig) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = dataset;
    cfg.critic.hidden = Some(vec![8]);
    cfg.generator.hidden = Some(vec![8]);
    cfg.train.iterations = 20;
    cfg.train.batch_size = 10;
    cfg.train.checkpoint_every = Some(10);
    cfg.eval.n = 20;
    cfg.samples.n = 7;
    cfg.samples.alphas = vec![1.0, 0.5];
    cfg
}

#[test]
fn metrics_lines_are_flat_v1_objects() {
    let dir = tempfile::tempdir().unwrap();
    run_train(&tiny(DatasetConfig::Ring8 { n: 100, seed: 1 }), dir.path()).unwrap();
    let text = std::fs::read_to_string(replicate_dir(dir.path(), 0).join(METRICS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    for (k, line) in lines.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["v"], "v1");
        assert_eq!(v["iteration"], 10 * (k + 1));
        for key in ["critic_loss", "loss_var", "grad_var_trace", "penalty", "generator_loss", "w1"] {
            assert!(v[key].is_f64(), "{key} missing in {line}");
        }
        assert!(v["modes_covered"].is_u64());
        assert!(v["critic_norms"].as_array().is_some_and(|a| a.len() == 2));
        assert!(v.get("wall_time").is_none());
    }
}

#[test]
fn toy_samples_end_with_alpha() {
    let dir = tempfile::tempdir().unwrap();
    run_train(&tiny(DatasetConfig::Ring8 { n: 100, seed: 1 }), dir.path()).unwrap();
    let t = RawTable::read_csv(&replicate_dir(dir.path(), 0).join(SAMPLES_FILE)).unwrap();
    assert_eq!(t.header, ["x1", "x2", "alpha"]);
    assert_eq!(t.rows.len(), 14);
    let alphas: Vec<f64> = t.rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(alphas[..7].iter().all(|&a| a == 1.0));
    assert!(alphas[7..].iter().all(|&a| a == 0.5));
}

#[test]
fn tabular_samples_keep_original_columns_then_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(DatasetConfig::Planted {
        n: 200,
        shift: 2.0,
        direct: 2.0,
        effect: 0.0,
        split: 0.9,
        seed: 3,
    });
    run_train(&cfg, dir.path()).unwrap();
    let t = RawTable::read_csv(&replicate_dir(dir.path(), 0).join(SAMPLES_FILE)).unwrap();
    assert_eq!(t.header, ["c1", "c2", "a", "y", "alpha"]);
    for r in &t.rows {
        assert!(r[2] == "0" || r[2] == "1");
        assert!(r[3] == "0" || r[3] == "1");
        r[0].parse::<f64>().unwrap();
    }
}
