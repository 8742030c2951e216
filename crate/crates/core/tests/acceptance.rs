//! End-to-end acceptance run. Every criterion prints one PASS/FAIL line with
//! its runtime and budget; the test fails if any criterion fails.
//!
//! Set `PTGAN_ACCEPTANCE_OUT=<dir>` to keep the run directories (the report
//! scripts read them); otherwise they go to a temporary directory.
//! `PTGAN_ACCEPTANCE_ONLY=1,4` runs a subset; 11 reruns 5, 7 and 9 and
//! needs their outputs.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptgan_core::autodiff::{finite_diff_oracle, Graph, Tensor};
use ptgan_core::data::{planted_discrimination, sample_mixture, MixtureSpec};
use ptgan_core::evalmetrics::{check_prop3_moments, geo_repair, solve_assignment, w1_distance, w1_sorted_1d, W1Method};
use ptgan_core::experiment::{
    prepare, prepare_table, read_metrics, replicate_dir, repair_table, run_fairgen, run_probe, run_train, DatasetConfig,
    ExperimentConfig, Prepared, ProbeKind, METRICS_FILE,
};
use ptgan_core::nets::{critic_forward, generator_forward_with_noise, Activation, Mlp, MlpParams, MlpSpec, OutputHead, TabularHeadSpec};
use ptgan_core::objectives::{
    coherency_penalty, critic_loss, fairness_penalty, generator_loss, gp_penalty, mp_penalty, penalty_points, r1_penalty,
    LossKind, PenaltyKind,
};
use ptgan_core::tempering::{interpolate, make_batch, sample_alpha, sample_noise, AlphaDist, TemperedBatch};
use ptgan_core::trainer::TrainConfig;

type Outcome = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn(&Path) -> Outcome,
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

#[test]
fn acceptance() {
    let keep = std::env::var_os("PTGAN_ACCEPTANCE_OUT").map(PathBuf::from);
    let tmp = tempfile::tempdir().unwrap();
    let root = keep.unwrap_or_else(|| tmp.path().to_path_buf());
    let criteria = [
        Criterion { id: 1, name: "gradient correctness", budget: minutes(1), run: gradients },
        Criterion { id: 2, name: "linear-critic variance identity", budget: minutes(5), run: linear_identity },
        Criterion { id: 3, name: "two-mode tempered moments", budget: minutes(1), run: tempered_moments },
        Criterion { id: 4, name: "W1 brute-force equivalence", budget: minutes(1), run: w1_oracle },
        Criterion { id: 5, name: "fixed-generator gradient variance", budget: minutes(10), run: probe_mode_gap },
        Criterion { id: 6, name: "variance reduction r=0.99", budget: minutes(10), run: probe_variance_reduction },
        Criterion { id: 7, name: "ring8 mode recovery", budget: minutes(60), run: ring_recovery },
        Criterion { id: 8, name: "gradient-noise spread", budget: minutes(60), run: noise_spread },
        Criterion { id: 9, name: "fairness direction", budget: minutes(30), run: fairness_direction },
        Criterion { id: 10, name: "geometric repair", budget: minutes(1), run: repair },
        Criterion { id: 11, name: "determinism", budget: minutes(60), run: determinism },
    ];
    let only: Option<Vec<u32>> = std::env::var("PTGAN_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.id))) {
        let start = Instant::now();
        let outcome = (c.run)(&root.join(format!("c{:02}", c.id)));
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && took <= c.budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "acceptance {:>2} {} {} ({:.1}s of {}s): {detail}",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
        if !ok {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sample_sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

// ---- 1 --------------------------------------------------------------------

const INSTANCES: u64 = 50;
const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn flat(m: &Mlp) -> Tensor {
    Tensor::column(&m.params.tensors().flat_map(|t| t.as_slice().to_vec()).collect::<Vec<_>>())
}

fn with_flat(m: &Mlp, theta: &Tensor) -> Mlp {
    let mut off = 0;
    let ts = m
        .params
        .tensors()
        .map(|t| {
            let v = theta.as_slice()[off..off + t.len()].to_vec();
            off += t.len();
            Tensor::from_vec(t.rows(), t.cols(), v).unwrap()
        })
        .collect();
    Mlp::from_parts(m.spec.clone(), MlpParams::from_tensors(ts).unwrap()).unwrap()
}

/// Entrywise relative error with a floor at 1e-3 of the largest reference
/// entry, so coordinates whose true gradient is near zero are judged on the
/// scale of the whole gradient.
fn rel_error(got: &Tensor, want: &Tensor) -> f64 {
    let floor = (1e-3 * want.max_abs()).max(1e-10);
    got.as_slice()
        .iter()
        .zip(want.as_slice())
        .map(|(g, w)| (g - w).abs() / w.abs().max(floor))
        .fold(0.0, f64::max)
}

fn flat_grads(g: &Graph, vars: &[ptgan_core::autodiff::Var]) -> Tensor {
    Tensor::column(&vars.iter().flat_map(|v| g.value(*v).as_slice().to_vec()).collect::<Vec<_>>())
}

struct Instance {
    critic: Mlp,
    generator: Mlp,
    batch: TemperedBatch,
    gumbel: Option<Tensor>,
}

fn random_widths(rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=5)).collect()
}

fn instance(loss: LossKind, tabular: bool, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, head) = if tabular {
        let t = TabularHeadSpec {
            continuous_dim: 1,
            discrete_groups: vec![2, 2],
            gumbel_tau: 0.5,
            continuous_tanh: true,
        };
        (t.width(), OutputHead::Tabular(t))
    } else {
        (rng.random_range(1..=3), OutputHead::Linear)
    };
    let d_z = rng.random_range(1..=3);
    let n = rng.random_range(3..=8);
    let cs = MlpSpec::uniform(d, random_widths(&mut rng), Activation::Tanh, 1, loss.critic_head()).unwrap();
    let gs = MlpSpec::uniform(d_z, random_widths(&mut rng), Activation::Tanh, d, head.clone()).unwrap();
    let critic = Mlp::new(cs, rng.random()).unwrap();
    let generator = Mlp::new(gs, rng.random()).unwrap();
    let data = Tensor::from_fn(20, d, |_, _| rng.random_range(-2.0..2.0));
    let batch = make_batch(&data, n, AlphaDist::new(0.5).unwrap(), d_z, &mut rng).unwrap();
    let gumbel = match &head {
        OutputHead::Tabular(t) => Some(ptgan_core::nets::draw_gumbel(n, t, &mut rng)),
        _ => None,
    };
    Instance {
        critic,
        generator,
        batch,
        gumbel,
    }
}

fn fake_of(inst: &Instance, generator: &Mlp) -> Tensor {
    let mut g = Graph::new();
    let b = generator.bind(&mut g);
    let z = g.leaf(inst.batch.z_alpha.clone());
    let out = generator_forward_with_noise(&mut g, generator, &b, z, &inst.batch.alpha1, inst.gumbel.as_ref()).unwrap();
    g.value(out.output).clone()
}

/// `L̂_b − penalty` as a function of the critic parameters, with its gradient.
fn critic_objective(inst: &Instance, critic: &Mlp, loss: LossKind, penalty: PenaltyKind) -> (f64, Tensor) {
    let fake = fake_of(inst, &inst.generator);
    let b = &inst.batch;
    let mut g = Graph::new();
    let bound = critic.bind(&mut g);
    let rv = g.leaf(b.q1.clone());
    let fv = g.leaf(fake.clone());
    let dr = critic_forward(&mut g, critic, &bound, rv, &b.alpha1).unwrap().output;
    let df = critic_forward(&mut g, critic, &bound, fv, &b.alpha1).unwrap().output;
    let mut total = critic_loss(&mut g, loss, dr, df).unwrap();
    let pts = penalty_points(&b.q1, &fake, &b.nu).unwrap();
    let p = match penalty {
        PenaltyKind::None => None,
        PenaltyKind::Cp { lambda } => Some(coherency_penalty(&mut g, critic, &bound, b, lambda).unwrap()),
        PenaltyKind::Mp { lambda } => Some(mp_penalty(&mut g, critic, &bound, &pts, &b.alpha1, lambda).unwrap()),
        PenaltyKind::Gp { lambda } => Some(gp_penalty(&mut g, critic, &bound, &pts, &b.alpha1, lambda).unwrap()),
        PenaltyKind::R1 { lambda } => Some(r1_penalty(&mut g, critic, &bound, &b.q1, &b.alpha1, lambda).unwrap()),
    };
    if let Some(p) = p {
        total = g.sub(total, p).unwrap();
    }
    let vars = bound.vars();
    let grads = g.backward(total, &vars, false).unwrap();
    (g.value(total).item(), flat_grads(&g, &grads))
}

/// Generator loss (plus the fairness penalty on tabular heads) as a function
/// of the generator parameters.
fn generator_objective(inst: &Instance, generator: &Mlp, loss: LossKind) -> (f64, Tensor) {
    let b = &inst.batch;
    let mut g = Graph::new();
    let bd = inst.critic.bind(&mut g);
    let bg = generator.bind(&mut g);
    let z = g.leaf(b.z_alpha.clone());
    let out = generator_forward_with_noise(&mut g, generator, &bg, z, &b.alpha1, inst.gumbel.as_ref())
        .unwrap()
        .output;
    let df = critic_forward(&mut g, &inst.critic, &bd, out, &b.alpha1).unwrap().output;
    let mut total = generator_loss(&mut g, loss, df).unwrap();
    if inst.gumbel.is_some() {
        // label and sensitive are the second entries of the two one-hot groups
        let p = fairness_penalty(&mut g, out, 2, 4, 10.0).unwrap();
        total = g.add(total, p).unwrap();
    }
    let vars = bg.vars();
    let grads = g.backward(total, &vars, false).unwrap();
    (g.value(total).item(), flat_grads(&g, &grads))
}

fn gradients(_: &Path) -> Outcome {
    let losses = [LossKind::Nd, LossKind::Jsd, LossKind::Pd];
    let penalties = [
        PenaltyKind::None,
        PenaltyKind::Cp { lambda: 100.0 },
        PenaltyKind::Mp { lambda: 1.0 },
        PenaltyKind::Gp { lambda: 10.0 },
        PenaltyKind::R1 { lambda: 10.0 },
    ];
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut seed = 0;
    for &loss in &losses {
        for &penalty in &penalties {
            for _ in 0..INSTANCES {
                seed += 1;
                let inst = instance(loss, false, seed);
                let (_, analytic) = critic_objective(&inst, &inst.critic, loss, penalty);
                let fd = finite_diff_oracle(
                    |t| critic_objective(&inst, &with_flat(&inst.critic, t), loss, penalty).0,
                    &flat(&inst.critic),
                    FD_STEP,
                );
                worst = worst.max(rel_error(&analytic, &fd));
                cases += 1;
            }
        }
        for tabular in [false, true] {
            for _ in 0..INSTANCES {
                seed += 1;
                let inst = instance(loss, tabular, seed);
                let (_, analytic) = generator_objective(&inst, &inst.generator, loss);
                let fd = finite_diff_oracle(
                    |t| generator_objective(&inst, &with_flat(&inst.generator, t), loss).0,
                    &flat(&inst.generator),
                    FD_STEP,
                );
                worst = worst.max(rel_error(&analytic, &fd));
                cases += 1;
            }
        }
    }
    Ok((worst < REL_TOL, format!("{cases} instances, worst relative error {worst:.2e} (tol {REL_TOL:e})")))
}

// ---- 2 --------------------------------------------------------------------

const BATCHES: usize = 100_000;
const NB: usize = 100;

/// `∂L̂_b/∂W` for the linear critic `D(q, α) = Wᵀ[q, α]` under ND, by
/// reverse mode.
fn linear_critic_gradient(q: &Tensor, a_real: &[f64], f: &Tensor, a_fake: &[f64], w: &Tensor) -> Vec<f64> {
    let with_alpha = |x: &Tensor, a: &[f64]| {
        Tensor::from_fn(x.rows(), x.cols() + 1, |i, j| if j < x.cols() { x.get(i, j) } else { a[i] })
    };
    let mut g = Graph::new();
    let wv = g.leaf(w.clone());
    let rv = g.leaf(with_alpha(q, a_real));
    let fv = g.leaf(with_alpha(f, a_fake));
    let dr = g.matmul(rv, wv).unwrap();
    let df = g.matmul(fv, wv).unwrap();
    let mr = g.mean_all(dr);
    let mf = g.mean_all(df);
    let l = g.sub(mr, mf).unwrap();
    let grad = g.backward(l, &[wv], false).unwrap()[0];
    g.value(grad).as_slice().to_vec()
}

/// Trace of the empirical covariance of per-batch gradients, with the
/// standard error of that estimate.
fn trace_with_se(grads: &[Vec<f64>]) -> (f64, f64) {
    let n = grads.len() as f64;
    let k = grads[0].len();
    let mean: Vec<f64> = (0..k).map(|j| grads.iter().map(|g| g[j]).sum::<f64>() / n).collect();
    let sq: Vec<f64> = grads
        .iter()
        .map(|g| g.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>() * n / (n - 1.0))
        .collect();
    let t = sq.iter().sum::<f64>() / n;
    let var = sq.iter().map(|s| (s - t).powi(2)).sum::<f64>() / (n - 1.0);
    (t, (var / n).sqrt())
}

fn base_generator(z: &Tensor) -> Tensor {
    // G₀(z) = A z + b
    Tensor::from_fn(z.rows(), 2, |i, j| {
        let (z0, z1) = (z.get(i, 0), z.get(i, 1));
        if j == 0 {
            1.5 * z0 + 0.3
        } else {
            0.5 * z0 + z1 - 0.2
        }
    })
}

fn tempered_gradients(pool: &Tensor, r: f64, seed: u64) -> Vec<Vec<f64>> {
    let dist = AlphaDist::new(r).unwrap();
    let w = Tensor::column(&[0.4, -0.7, 0.2]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..BATCHES)
        .map(|_| {
            let b = make_batch(pool, NB, dist, 2, &mut rng).unwrap();
            // fake temperatures are drawn independently of the real ones
            let a_fake = sample_alpha(dist, NB, &mut rng);
            let g1 = base_generator(&sample_noise(NB, 2, &mut rng));
            let g2 = base_generator(&sample_noise(NB, 2, &mut rng));
            let fake = interpolate(&a_fake, &g1, &g2).unwrap();
            linear_critic_gradient(&b.q1, &b.alpha1, &fake, &a_fake, &w)
        })
        .collect()
}

fn linear_identity(_: &Path) -> Outcome {
    let pool = sample_mixture(&MixtureSpec::ring8(), 10_000, &mut ChaCha8Rng::seed_from_u64(1)).map_err(e)?;
    let (vanilla, vanilla_se) = trace_with_se(&tempered_gradients(&pool, 1.0, 100));
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, r) in [0.0, 1.0 / 3.0, 0.9, 1.0].into_iter().enumerate() {
        let (t, se) = trace_with_se(&tempered_gradients(&pool, r, 200 + k as u64));
        let mean = r + (1.0 - r) / 2.0;
        let var_alpha = r + (1.0 - r) / 3.0 - mean * mean;
        let c = 2.0 / 3.0 + r / 3.0;
        let want = c * vanilla + var_alpha * 2.0 / NB as f64;
        let z = (t - want) / (se * se + c * c * vanilla_se * vanilla_se).sqrt();
        ok &= z.abs() < 3.0;
        parts.push(format!("r={r:.3}: {t:.5} vs {want:.5} ({z:+.2} SE)"));
    }
    Ok((ok, parts.join("; ")))
}

// ---- 3 --------------------------------------------------------------------

fn tempered_moments(_: &Path) -> Outcome {
    let (mu1, mu2, sigma) = (-1.5, 1.5, 0.1);
    let est = check_prop3_moments(mu1, mu2, sigma, 1_000_000, 0).map_err(e)?;
    let delta: f64 = (mu1 - mu2).abs();
    let gap = 0.75 * delta;
    let stated = (0.75 * sigma * sigma + 5.0 * delta * delta / 192.0).sqrt();
    let derived = (2.0 * sigma * sigma / 3.0 + 5.0 * delta * delta / 192.0).sqrt();
    let z_gap = (est.gap - gap) / est.gap_se;
    let z_sigma = (est.sigma - stated) / est.sigma_se;
    let z_derived = (est.sigma - derived) / est.sigma_se;
    Ok((
        z_gap.abs() < 3.0 && z_sigma.abs() < 3.0,
        format!(
            "gap {:.5} vs {gap:.5} ({z_gap:+.2} SE); sigma* {:.5} vs {stated:.5} ({z_sigma:+.2} SE); \
             against 2σ²/3 + 5Δ²/192 = {derived:.5}: {z_derived:+.2} SE",
            est.gap, est.sigma
        ),
    ))
}

// ---- 4 --------------------------------------------------------------------

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force_w1(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.rows();
    let dist = |i: usize, j: usize| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    permutations(n)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| dist(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / n as f64
}

fn w1_oracle(_: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=7);
        let d = rng.random_range(1..=3);
        let a = Tensor::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
        let b = Tensor::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
        let want = brute_force_w1(&a, &b);
        let cost: Vec<f64> = (0..n * n)
            .map(|k| {
                a.row(k / n)
                    .iter()
                    .zip(b.row(k % n))
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let assign = solve_assignment(&cost, n);
        let got = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64;
        worst = worst.max((got - want).abs());
        let r = w1_distance(&a, &b).map_err(e)?;
        let expected = if d == 1 { W1Method::Sorted1d } else { W1Method::ExactAssignment };
        if r.method != expected {
            return Ok((false, format!("unexpected method {:?} for d={d}", r.method)));
        }
        worst = worst.max((r.value - want).abs());
    }
    Ok((worst < 1e-9, format!("100 instances, largest cost difference {worst:.1e}")))
}

// ---- 5, 6 -----------------------------------------------------------------

const SEEDS: usize = 10;
const PROBE_ITERATIONS: usize = 2000;

fn probe_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.critic.hidden = Some(vec![64; 4]);
    cfg.probe.iterations = PROBE_ITERATIONS;
    cfg.probe.checkpoint_every = Some(PROBE_ITERATIONS);
    cfg.probe.seed = 0;
    cfg.replicates = SEEDS;
    cfg
}

/// Final-checkpoint value of `f` for every replicate of `arm`.
fn arm_values(res: &[ptgan_core::experiment::ArmResult], arm: &str, f: fn(&ptgan_core::trainer::MetricsRecord) -> f64) -> Vec<f64> {
    res.iter()
        .filter(|r| r.arm == arm)
        .map(|r| f(r.last.as_ref().expect("probe logs a final checkpoint")))
        .collect()
}

fn probe_mode_gap(out: &Path) -> Outcome {
    let res = run_probe(ProbeKind::FixedGenerator, &probe_config(), out).map_err(e)?;
    let near = median(&arm_values(&res, "mu2-1.5", |m| m.grad_var_trace));
    let far = median(&arm_values(&res, "mu2-3", |m| m.grad_var_trace));
    Ok((far > near, format!("median grad-variance trace mu2=3: {far:.4e}, mu2=1.5: {near:.4e}")))
}

fn probe_variance_reduction(out: &Path) -> Outcome {
    let mut cfg = probe_config();
    cfg.probe_arms.r = vec![1.0, 0.99];
    cfg.probe_arms.variance_reduction_mu2 = 3.0;
    let res = run_probe(ProbeKind::VarianceReduction, &cfg, out).map_err(e)?;
    let plain = median(&arm_values(&res, "r-1", |m| m.loss_var));
    let tempered = median(&arm_values(&res, "r-0.99", |m| m.loss_var));
    Ok((tempered < plain, format!("median Var[L_b] r=0.99: {tempered:.4e}, r=1: {plain:.4e}")))
}

// ---- 7, 8 -----------------------------------------------------------------

const RING_ITERATIONS: usize = 20_000;
const RING_WIDTH: usize = 64;

fn ring_config(train: TrainConfig) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = DatasetConfig::Ring8 { n: 10_000, seed: 12345 };
    cfg.critic.hidden = Some(vec![RING_WIDTH; 4]);
    cfg.generator.hidden = Some(vec![RING_WIDTH; 4]);
    cfg.train = TrainConfig {
        iterations: RING_ITERATIONS,
        seed: 0,
        ..train
    };
    cfg.replicates = SEEDS;
    cfg
}

fn pt_cp() -> ExperimentConfig {
    ring_config(TrainConfig::default())
}

fn log_w1s(summaries: &[ptgan_core::experiment::RunSummary]) -> Result<Vec<f64>, String> {
    summaries
        .iter()
        .map(|s| s.log_w1.ok_or_else(|| "run without a W1 score".to_string()))
        .collect()
}

fn ring_recovery(out: &Path) -> Outcome {
    let cp = run_train(&pt_cp(), &out.join("pt-cp")).map_err(e)?;
    let nd = run_train(
        &ring_config(TrainConfig {
            penalty: PenaltyKind::None,
            r: 1.0,
            interpolated_noise: false,
            ..TrainConfig::default()
        }),
        &out.join("nd"),
    )
    .map_err(e)?;
    let full = cp.iter().filter(|s| s.last.modes_covered == Some(8)).count();
    let (m_cp, m_nd) = (median(&log_w1s(&cp)?), median(&log_w1s(&nd)?));
    Ok((
        full >= 8 && m_cp < m_nd,
        format!("PT+CP covers 8/8 in {full}/{SEEDS} seeds; median log W1 PT+CP {m_cp:.3}, ND {m_nd:.3}"),
    ))
}

fn noise_spread(out: &Path) -> Outcome {
    let mut cfg = ring_config(TrainConfig {
        penalty: PenaltyKind::Mp { lambda: 1.0 },
        r: 1.0,
        interpolated_noise: false,
        ..TrainConfig::default()
    });
    cfg.probe_arms.sigma = vec![0.0, 0.01];
    let res = run_probe(ProbeKind::NoiseInjection, &cfg, out).map_err(e)?;
    let sd = |arm: &str| -> Result<f64, String> {
        let v: Vec<f64> = res
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| r.log_w1.ok_or_else(|| "arm without a W1 score".to_string()))
            .collect::<Result<_, _>>()?;
        Ok(sample_sd(&v))
    };
    let (quiet, noisy) = (sd("sigma-0")?, sd("sigma-0.01")?);
    Ok((noisy > quiet, format!("sd of final log W1: sigma=0.01 {noisy:.4}, sigma=0 {quiet:.4}")))
}

// ---- 9 --------------------------------------------------------------------

fn fair_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = DatasetConfig::Planted {
        n: 4000,
        shift: 2.0,
        direct: 2.0,
        effect: 0.0,
        split: 0.9,
        seed: 12345,
    };
    cfg.critic.hidden = Some(vec![64; 4]);
    cfg.generator.hidden = Some(vec![64; 4]);
    cfg.train.iterations = 6000;
    cfg.train.batch_size = 200;
    cfg.train.seed = 0;
    cfg.fair.alphas = vec![1.0, 0.5];
    cfg.replicates = SEEDS;
    cfg
}

fn fairness_direction(out: &Path) -> Outcome {
    let cfg = fair_config();
    let rows = run_fairgen(&cfg, out).map_err(e)?;
    let at = |alpha: f64, f: fn(&ptgan_core::experiment::DownstreamRow) -> Option<f64>| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.method == "fairptgan" && r.param == alpha)
            .filter_map(f)
            .collect()
    };
    let (sp1, sp05) = (at(1.0, |r| r.sp), at(0.5, |r| r.sp));
    let auc05 = at(0.5, |r| r.auc);
    if sp1.len() != SEEDS || sp05.len() != SEEDS || auc05.len() != SEEDS {
        return Ok((false, format!("scored {}/{}/{} of {SEEDS} data sets", sp1.len(), sp05.len(), auc05.len())));
    }
    // Upper edge of the chance band: 3 null standard deviations of the
    // Mann-Whitney AUC on the test split.
    let Prepared::Tabular(t) = prepare(&cfg).map_err(e)? else {
        return Err("planted data is tabular".into());
    };
    let label = t.encoder.schema.label.clone().ok_or("planted schema has a label")?;
    let y = t.encoder.binary_column(&t.test, &label).map_err(e)?;
    let n1 = y.iter().filter(|&&v| v).count() as f64;
    let n0 = y.len() as f64 - n1;
    let band = 0.5 + 3.0 * ((n1 + n0 + 1.0) / (12.0 * n1 * n0)).sqrt();
    let (m1, m05, a05) = (median(&sp1), median(&sp05), median(&auc05));
    Ok((
        m05 < m1 && a05 > band,
        format!("median SP alpha=0.5 {m05:.3} vs alpha=1 {m1:.3}; median AUC alpha=0.5 {a05:.3} (chance band up to {band:.3})"),
    ))
}

// ---- 10 -------------------------------------------------------------------

fn repair(_: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = DatasetConfig::Planted {
        n: 2000,
        shift: 2.0,
        direct: 2.0,
        effect: 0.0,
        split: 0.9,
        seed: 10,
    };
    // Keep equal group sizes so the two repaired quantile functions coincide.
    let raw = planted_discrimination(4000, 2.0, 2.0, 0.0, &mut rng);
    let schema = cfg.dataset.schema().map_err(e)?.ok_or("planted schema")?;
    let sensitive = schema.sensitive.clone().ok_or("planted schema has a sensitive column")?;
    let a_col = raw.column_index(&sensitive).ok_or("sensitive column present")?;
    let first = raw.rows[0][a_col].clone();
    let (mut g0, mut g1): (Vec<_>, Vec<_>) = raw.rows.iter().cloned().partition(|r| r[a_col] == first);
    let k = g0.len().min(g1.len());
    g0.truncate(k);
    g1.truncate(k);
    let mut table = raw.clone();
    table.rows = g0.into_iter().chain(g1).collect();
    let t = prepare_table(table.clone(), &cfg, 0.9, 10).map_err(e)?;

    let identity = repair_table(&table, &t, 0.0).map_err(e)? == table;
    let repaired = repair_table(&table, &t, 1.0).map_err(e)?;
    let groups: Vec<bool> = repaired.rows.iter().map(|r| r[a_col] == first).collect();
    let mut worst: f64 = 0.0;
    let mut columns = 0;
    for c in schema.columns.iter().filter(|c| c.kind == ptgan_core::data::ColumnType::Continuous) {
        let j = repaired.column_index(&c.name).ok_or("continuous column present")?;
        let values: Vec<f64> = repaired.rows.iter().map(|r| r[j].parse::<f64>().map_err(e)).collect::<Result<_, _>>()?;
        let (a, b): (Vec<f64>, Vec<f64>) = {
            let a = values.iter().zip(&groups).filter(|(_, &g)| g).map(|(v, _)| *v).collect();
            let b = values.iter().zip(&groups).filter(|(_, &g)| !g).map(|(v, _)| *v).collect();
            (a, b)
        };
        worst = worst.max(w1_sorted_1d(&a, &b));
        columns += 1;
    }
    // The column-level routine on its own, also tie-free and equal-sized.
    let x: Vec<f64> = (0..1000).map(|i| rng.random_range(-1.0..1.0) + if i % 2 == 0 { 3.0 } else { 0.0 }).collect();
    let g: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
    let same = geo_repair(&x, &g, 0.0).map_err(e)? == x;
    let y = geo_repair(&x, &g, 1.0).map_err(e)?;
    let split = |v: &[f64], want: bool| -> Vec<f64> { v.iter().zip(&g).filter(|(_, &k)| k == want).map(|(x, _)| *x).collect() };
    worst = worst.max(w1_sorted_1d(&split(&y, true), &split(&y, false)));
    Ok((
        identity && same && worst < 1e-9,
        format!("lambda=0 identity: table {identity}, column {same}; largest between-group W1 at lambda=1 over {columns} table columns and 1 synthetic column: {worst:.1e}"),
    ))
}

// ---- 11 -------------------------------------------------------------------

fn metrics_bytes(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|err| format!("{}: {err}", path.display()))
}

/// Reruns replicate 0 of the probe, ring8 and fairness runs above and
/// compares the metrics files byte for byte.
fn determinism(out: &Path) -> Outcome {
    let root = out.parent().ok_or("acceptance root")?;
    let mut checks = Vec::new();

    let mut probe = probe_config();
    probe.replicates = 1;
    run_probe(ProbeKind::FixedGenerator, &probe, &out.join("probe")).map_err(e)?;
    for arm in ["mu2-1.5.jsonl", "mu2-3.jsonl"] {
        checks.push((
            replicate_dir(&root.join("c05"), 0).join(arm),
            replicate_dir(&out.join("probe"), 0).join(arm),
        ));
    }

    let mut ring = pt_cp();
    ring.replicates = 1;
    run_train(&ring, &out.join("ring")).map_err(e)?;
    checks.push((
        replicate_dir(&root.join("c07").join("pt-cp"), 0).join(METRICS_FILE),
        replicate_dir(&out.join("ring"), 0).join(METRICS_FILE),
    ));

    let mut fair = fair_config();
    fair.replicates = 1;
    run_fairgen(&fair, &out.join("fair")).map_err(e)?;
    checks.push((
        replicate_dir(&root.join("c09"), 0).join(METRICS_FILE),
        replicate_dir(&out.join("fair"), 0).join(METRICS_FILE),
    ));

    let mut same = 0;
    for (a, b) in &checks {
        let (x, y) = (metrics_bytes(a)?, metrics_bytes(b)?);
        if !x.is_empty() && x == y && read_metrics(b).is_ok() {
            same += 1;
        }
    }
    Ok((same == checks.len(), format!("{same}/{} metrics files reproduced bit for bit", checks.len())))
}
