//! Temperature sampling and tempered minibatch construction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Mixture law of the temperature: a point mass `r` at 1, the rest `Unif(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaDist {
    r: f64,
}

impl AlphaDist {
    pub fn new(r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invalid(format!("point-mass weight r={r} outside [0, 1]")));
        }
        Ok(Self { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn mean(&self) -> f64 {
        self.r + (1.0 - self.r) / 2.0
    }

    pub fn second_moment(&self) -> f64 {
        self.r + (1.0 - self.r) / 3.0
    }

    pub fn variance(&self) -> f64 {
        self.second_moment() - self.mean().powi(2)
    }
}

/// `n` independent temperatures.
///
/// Both the mixture coin and the uniform are consumed on every draw, so two
/// samplers sharing a seed but differing in `r` stay on the same random
/// stream.
pub fn sample_alpha(dist: AlphaDist, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let coin: f64 = rng.random();
            let u: f64 = rng.random();
            if coin < dist.r {
                1.0
            } else {
                u
            }
        })
        .collect()
}

pub fn sample_uniform(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random()).collect()
}

/// Reference noise `Unif(−1, 1)^{d_z}`.
pub fn sample_noise(n: usize, d_z: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(n, d_z, |_, _| rng.random_range(-1.0..1.0))
}

/// Row-wise `α_i·a_i + (1 − α_i)·b_i`.
pub fn interpolate(alpha: &[f64], a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() || a.rows() != alpha.len() {
        return Err(crate::autodiff::AutodiffError::ShapeMismatch {
            op: "interpolate",
            lhs: a.shape(),
            rhs: b.shape(),
        }
        .into());
    }
    Ok(Tensor::from_fn(a.rows(), a.cols(), |i, j| {
        alpha[i] * a.get(i, j) + (1.0 - alpha[i]) * b.get(i, j)
    }))
}

fn interpolate_scalars(w: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(a.iter().zip(b))
        .map(|(&w, (&a, &b))| w * a + (1.0 - w) * b)
        .collect()
}

/// One tempered minibatch together with the reference noise for the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct TemperedBatch {
    /// Real tempered samples at `alpha1`.
    pub q1: Tensor,
    /// Second tempered samples at `alpha2`, used by the coherency penalty.
    pub q2: Tensor,
    /// `ν·q1 + (1 − ν)·q2`.
    pub q_tilde: Tensor,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub nu: Vec<f64>,
    pub alpha_tilde: Vec<f64>,
    pub z: Tensor,
    /// `α1·z + (1 − α1)·z′`.
    pub z_alpha: Tensor,
}

impl TemperedBatch {
    pub fn len(&self) -> usize {
        self.alpha1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha1.is_empty()
    }

    /// Generator input: the interpolated noise, or plain `z` when disabled.
    pub fn generator_noise(&self, interpolated: bool) -> &Tensor {
        if interpolated {
            &self.z_alpha
        } else {
            &self.z
        }
    }
}

fn draw_rows(data: &Tensor, n: usize, rng: &mut impl Rng) -> Tensor {
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..data.rows())).collect();
    data.select_rows(&idx)
}

fn finish(
    q1: Tensor,
    q2: Tensor,
    alpha1: Vec<f64>,
    alpha2: Vec<f64>,
    d_z: usize,
    rng: &mut impl Rng,
) -> Result<TemperedBatch> {
    let n = alpha1.len();
    let nu = sample_uniform(n, rng);
    let q_tilde = interpolate(&nu, &q1, &q2)?;
    let alpha_tilde = interpolate_scalars(&nu, &alpha1, &alpha2);
    let z = sample_noise(n, d_z, rng);
    let z_prime = sample_noise(n, d_z, rng);
    let z_alpha = interpolate(&alpha1, &z, &z_prime)?;
    Ok(TemperedBatch {
        q1,
        q2,
        q_tilde,
        alpha1,
        alpha2,
        nu,
        alpha_tilde,
        z,
        z_alpha,
    })
}

/// Tempered minibatch from one pool: pairs `(x, x′)` are drawn independently
/// with replacement and mixed at `α1 ∼ dist` and `α2 ∼ Unif(0, 1)`.
pub fn make_batch(data: &Tensor, n_b: usize, dist: AlphaDist, d_z: usize, rng: &mut impl Rng) -> Result<TemperedBatch> {
    if data.rows() < 2 {
        return Err(Error::invalid(format!("need at least 2 data rows, got {}", data.rows())));
    }
    if n_b == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let x = draw_rows(data, n_b, rng);
    let x_prime = draw_rows(data, n_b, rng);
    let alpha1 = sample_alpha(dist, n_b, rng);
    let alpha2 = sample_uniform(n_b, rng);
    let q1 = interpolate(&alpha1, &x, &x_prime)?;
    let q2 = interpolate(&alpha2, &x, &x_prime)?;
    finish(q1, q2, alpha1, alpha2, d_z, rng)
}

/// Rows split by a binary sensitive attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedData {
    pub rows_a0: Tensor,
    pub rows_a1: Tensor,
}

impl GroupedData {
    /// Partitions `data` by `groups[i] ∈ {0, 1}`.
    pub fn split(data: &Tensor, groups: &[u8]) -> Result<Self> {
        if groups.len() != data.rows() {
            return Err(Error::invalid("group labels do not match the data rows"));
        }
        let pick = |g: u8| -> Vec<usize> { (0..groups.len()).filter(|&i| groups[i] == g).collect() };
        if let Some(bad) = groups.iter().find(|&&g| g > 1) {
            return Err(Error::invalid(format!("group label {bad} is not binary")));
        }
        Ok(Self {
            rows_a0: data.select_rows(&pick(0)),
            rows_a1: data.select_rows(&pick(1)),
        })
    }
}

/// Fair tempered minibatch: every pair mixes one row of each group, and the
/// batch holds both mixing directions `α·x⁽⁰⁾ + (1 − α)·x⁽¹⁾` and
/// `(1 − α)·x⁽⁰⁾ + α·x⁽¹⁾` with the same `α`.
///
/// Temperatures are recorded as `[α; α]`; the second half sits at `1 − α`,
/// which the networks cannot tell apart through `t`.
pub fn make_fair_batch(
    groups: &GroupedData,
    n_b: usize,
    dist: AlphaDist,
    d_z: usize,
    rng: &mut impl Rng,
) -> Result<TemperedBatch> {
    if n_b == 0 || n_b % 2 != 0 {
        return Err(Error::invalid(format!("fair batch size must be even and positive, got {n_b}")));
    }
    let half = n_b / 2;
    for (name, g) in [("A=0", &groups.rows_a0), ("A=1", &groups.rows_a1)] {
        if g.rows() == 0 {
            return Err(Error::invalid(format!("group {name} is empty")));
        }
        if g.rows() < half {
            return Err(Error::invalid(format!(
                "group {name} has {} rows, fewer than half the batch ({half})",
                g.rows()
            )));
        }
    }
    let x0 = draw_rows(&groups.rows_a0, half, rng);
    let x0p = draw_rows(&groups.rows_a0, half, rng);
    let x1 = draw_rows(&groups.rows_a1, half, rng);
    let x1p = draw_rows(&groups.rows_a1, half, rng);
    let a1 = sample_alpha(dist, half, rng);
    let a2 = sample_uniform(half, rng);

    let check1 = interpolate(&a1, &x0, &x1)?;
    let check2 = interpolate(&a1, &x1, &x0)?;
    let hat1 = interpolate(&a2, &x0p, &x1p)?;
    let hat2 = interpolate(&a2, &x1p, &x0p)?;
    let q1 = Tensor::vstack(&[&check1, &check2])?;
    let q2 = Tensor::vstack(&[&hat1, &hat2])?;
    let alpha1 = [a1.as_slice(), a1.as_slice()].concat();
    let alpha2 = [a2.as_slice(), a2.as_slice()].concat();
    finish(q1, q2, alpha1, alpha2, d_z, rng)
}
