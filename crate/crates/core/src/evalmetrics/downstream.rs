//! Downstream utility and fairness scores: logistic regression, AUC,
//! statistical parity, the late-half convergence score and Pareto frontiers.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const LOGISTIC_L2: f64 = 1e-4;
pub const LOGISTIC_MAX_ITER: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamScore {
    pub auc: f64,
    pub sp: f64,
    pub model: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    /// Minimizes mean log-loss plus `½·LOGISTIC_L2·‖w‖²` (bias unpenalized)
    /// by accelerated full-batch gradient descent with step `1/L`, where `L`
    /// bounds the Hessian through the mean squared row norm.
    pub fn fit(x: &Tensor, y: &[bool]) -> Result<Self> {
        let (n, d) = x.shape();
        if n != y.len() {
            return Err(Error::invalid(format!("{n} feature rows for {} labels", y.len())));
        }
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            return Err(Error::invalid("logistic regression needs both classes in the training labels"));
        }
        if !x.is_finite() {
            return Err(Error::invalid("non-finite training features"));
        }
        let mean_sq = (0..n).map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>() + 1.0).sum::<f64>() / n as f64;
        let step = 1.0 / (0.25 * mean_sq + LOGISTIC_L2);
        let mut theta = vec![0.0; d + 1];
        let mut prev = theta.clone();
        let mut grad = vec![0.0; d + 1];
        for k in 0..LOGISTIC_MAX_ITER {
            let momentum = k as f64 / (k as f64 + 3.0);
            let look: Vec<f64> = theta.iter().zip(&prev).map(|(t, p)| t + momentum * (t - p)).collect();
            grad.fill(0.0);
            for i in 0..n {
                let row = x.row(i);
                let z = look[d] + row.iter().zip(&look).map(|(a, w)| a * w).sum::<f64>();
                let r = sigmoid(z) - if y[i] { 1.0 } else { 0.0 };
                for (g, a) in grad.iter_mut().zip(row) {
                    *g += r * a;
                }
                grad[d] += r;
            }
            for (j, g) in grad.iter_mut().enumerate() {
                *g /= n as f64;
                if j < d {
                    *g += LOGISTIC_L2 * look[j];
                }
            }
            prev = std::mem::replace(&mut theta, look.iter().zip(&grad).map(|(t, g)| t - step * g).collect());
            if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-10 {
                break;
            }
        }
        let bias = theta.pop().expect("bias slot");
        Ok(Self { weights: theta, bias })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        if x.cols() != self.weights.len() {
            return Err(Error::invalid(format!("model has {} features, input {}", self.weights.len(), x.cols())));
        }
        Ok((0..x.rows())
            .map(|i| sigmoid(self.bias + x.row(i).iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>()))
            .collect())
    }
}

pub fn logistic_fit_predict(x_train: &Tensor, y_train: &[bool], x_test: &Tensor) -> Result<Vec<f64>> {
    LogisticModel::fit(x_train, y_train)?.predict(x_test)
}

/// Area under the ROC curve as the Mann–Whitney rank statistic, ties
/// receiving their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("auc needs both classes"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// `|P(score > τ | A = 1) − P(score > τ | A = 0)|`.
pub fn statistical_parity(scores: &[f64], groups: &[bool], tau: f64) -> Result<f64> {
    if scores.len() != groups.len() {
        return Err(Error::invalid(format!("{} scores for {} group labels", scores.len(), groups.len())));
    }
    let mut hits = [0usize; 2];
    let mut sizes = [0usize; 2];
    for (&s, &a) in scores.iter().zip(groups) {
        sizes[a as usize] += 1;
        hits[a as usize] += (s > tau) as usize;
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("statistical parity needs both groups present"));
    }
    Ok((hits[1] as f64 / sizes[1] as f64 - hits[0] as f64 / sizes[0] as f64).abs())
}

/// Threshold maximizing accuracy of `score > τ` on the given labels, searched
/// over midpoints of consecutive distinct scores and below the minimum. Ties
/// in accuracy go to the smallest threshold.
pub fn best_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::invalid("best_threshold needs matching non-empty scores and labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let total_pos = labels.iter().filter(|&&l| l).count() as i64;
    // Everything predicted positive: correct count equals the positives.
    let mut correct = total_pos;
    let mut best = (correct, scores[order[0]] - 1.0);
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            correct += if labels[order[i]] { -1 } else { 1 };
            i += 1;
        }
        if correct > best.0 {
            let tau = if i < order.len() { 0.5 * (v + scores[order[i]]) } else { v };
            best = (correct, tau);
        }
    }
    Ok(best.1)
}

/// Fits logistic regression on the training set, picks the operating
/// threshold by training accuracy, and scores AUC and SP on the test set.
pub fn downstream_score(
    x_train: &Tensor,
    y_train: &[bool],
    x_test: &Tensor,
    y_test: &[bool],
    a_test: &[bool],
) -> Result<DownstreamScore> {
    let model = LogisticModel::fit(x_train, y_train)?;
    let tau = best_threshold(&model.predict(x_train)?, y_train)?;
    let test_scores = model.predict(x_test)?;
    Ok(DownstreamScore {
        auc: auc(&test_scores, y_test)?,
        sp: statistical_parity(&test_scores, a_test, tau)?,
        model: "logistic".into(),
    })
}

/// Late-half gap between downstream scores of synthetic-trained models and
/// the real-trained reference, indexed over evaluation checkpoints:
/// `Σ_{t=⌈T/2⌉+1}^{T} |S_train − S_t| / (T − ⌈T/2⌉ + 2)`.
pub fn s_t_score(s_train: f64, series: &[f64]) -> Result<f64> {
    let t = series.len();
    if t < 2 {
        return Err(Error::invalid(format!("s_t_score needs at least 2 checkpoints, got {t}")));
    }
    let half = t.div_ceil(2);
    let sum: f64 = series[half..].iter().map(|s| (s_train - s).abs()).sum();
    Ok(sum / (t - half + 2) as f64)
}

/// Indices of the `(auc, sp)` points not dominated by any other point, where
/// higher AUC together with lower SP dominates. Sorted by AUC, stable.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    let dominates = |p: (f64, f64), q: (f64, f64)| p.0 >= q.0 && p.1 <= q.1 && (p.0 > q.0 || p.1 < q.1);
    let mut keep: Vec<usize> = (0..points.len())
        .filter(|&i| !points.iter().any(|&p| dominates(p, points[i])))
        .collect();
    keep.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0));
    keep
}
