//! Critic and generator losses, the coherency penalty, MP/GP regularizers and
//! the generator-side fairness penalty.
//!
//! Critic losses are oriented for ascent; generator losses for descent.
//! Penalties are returned already scaled by their weight and are subtracted
//! from the critic objective by the trainer.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{critic_forward, BoundMlp, Mlp, OutputHead};
use crate::tempering::TemperedBatch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Neural distance (Wasserstein-type critic).
    Nd,
    /// Jensen-Shannon with a sigmoid critic.
    Jsd,
    /// Pearson χ² (least-squares).
    Pd,
}

impl LossKind {
    /// Critic head this loss expects.
    pub fn critic_head(self) -> OutputHead {
        match self {
            LossKind::Jsd => OutputHead::Sigmoid,
            LossKind::Nd | LossKind::Pd => OutputHead::Linear,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PenaltyKind {
    None,
    /// Coherency penalty.
    Cp { lambda: f64 },
    /// Maximum gradient-norm penalty.
    Mp { lambda: f64 },
    /// Gradient penalty `(‖∇D‖ − 1)²`.
    Gp { lambda: f64 },
    /// `(λ/2)·mean ‖∇D‖²` at real points only.
    R1 { lambda: f64 },
}

impl PenaltyKind {
    pub fn lambda(self) -> f64 {
        match self {
            PenaltyKind::None => 0.0,
            PenaltyKind::Cp { lambda }
            | PenaltyKind::Mp { lambda }
            | PenaltyKind::Gp { lambda }
            | PenaltyKind::R1 { lambda } => lambda,
        }
    }

    pub fn validate(self) -> Result<()> {
        let l = self.lambda();
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("penalty weight {l} must be finite and >= 0")));
        }
        Ok(())
    }
}

fn check_probabilities(g: &Graph, v: Var, what: &str) -> Result<()> {
    if let Some(bad) = g.value(v).as_slice().iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::invalid(format!("JSD needs {what} in (0, 1), got {bad}")));
    }
    Ok(())
}

/// Critic objective, to be maximized.
///
/// ND: `mean D(real) − mean D(fake)`; JSD: `mean log D(real) + mean log(1 − D(fake))`;
/// PD: `−[½ mean (D(real) − 1)² + ½ mean D(fake)²]`.
pub fn critic_loss(g: &mut Graph, kind: LossKind, d_real: Var, d_fake: Var) -> Result<Var> {
    Ok(match kind {
        LossKind::Nd => {
            let r = g.mean_all(d_real);
            let f = g.mean_all(d_fake);
            g.sub(r, f)?
        }
        LossKind::Jsd => {
            check_probabilities(g, d_real, "D(real)")?;
            check_probabilities(g, d_fake, "D(fake)")?;
            let lr = g.log(d_real)?;
            let one_minus = g.affine(d_fake, -1.0, 1.0);
            let lf = g.log(one_minus)?;
            let r = g.mean_all(lr);
            let f = g.mean_all(lf);
            g.add(r, f)?
        }
        LossKind::Pd => {
            let r = g.affine(d_real, 1.0, -1.0);
            let r = g.square(r);
            let r = g.mean_all(r);
            let f = g.square(d_fake);
            let f = g.mean_all(f);
            let s = g.add(r, f)?;
            g.scale(s, -0.5)
        }
    })
}

/// Generator objective, to be minimized.
///
/// ND: `−mean D(fake)`; JSD (non-saturating): `−mean log D(fake)`;
/// PD (least squares): `½ mean (D(fake) − 1)²`.
pub fn generator_loss(g: &mut Graph, kind: LossKind, d_fake: Var) -> Result<Var> {
    Ok(match kind {
        LossKind::Nd => {
            let m = g.mean_all(d_fake);
            g.scale(m, -1.0)
        }
        LossKind::Jsd => {
            check_probabilities(g, d_fake, "D(fake)")?;
            let l = g.log(d_fake)?;
            let m = g.mean_all(l);
            g.scale(m, -1.0)
        }
        LossKind::Pd => {
            let d = g.affine(d_fake, 1.0, -1.0);
            let s = g.square(d);
            let m = g.mean_all(s);
            g.scale(m, 0.5)
        }
    })
}

/// Per-pair terms `L_i` whose mean is the critic objective.
pub fn per_item_losses(kind: LossKind, d_real: &Tensor, d_fake: &Tensor) -> Result<Vec<f64>> {
    if d_real.shape() != d_fake.shape() || d_real.cols() != 1 {
        return Err(crate::autodiff::AutodiffError::ShapeMismatch {
            op: "per_item_losses",
            lhs: d_real.shape(),
            rhs: d_fake.shape(),
        }
        .into());
    }
    let r = d_real.as_slice();
    let f = d_fake.as_slice();
    Ok(r.iter()
        .zip(f)
        .map(|(&r, &f)| match kind {
            LossKind::Nd => r - f,
            LossKind::Jsd => r.ln() + (1.0 - f).ln(),
            LossKind::Pd => -0.5 * ((r - 1.0).powi(2) + f * f),
        })
        .collect())
}

/// Critic output at `x` together with `∇_x D(x, t(α))` for every row, the
/// latter still attached to the graph so penalties built on it can be
/// differentiated with respect to the critic parameters.
pub fn critic_input_gradient(
    g: &mut Graph,
    critic: &Mlp,
    bound: &BoundMlp,
    x: &Tensor,
    alpha: &[f64],
) -> Result<(Var, Var)> {
    let xv = g.leaf(x.clone());
    let out = critic_forward(g, critic, bound, xv, alpha)?.output;
    // Rows are independent, so the gradient of the sum is the per-row gradient.
    let total = g.sum_all(out);
    let grad = g.backward(total, &[xv], true)?[0];
    Ok((out, grad))
}

/// `λ · mean_i (∇_{q̃_i} D(q̃_i, t(α̃_i)) · (q1_i − q2_i))²`.
pub fn coherency_penalty(g: &mut Graph, critic: &Mlp, bound: &BoundMlp, batch: &TemperedBatch, lambda: f64) -> Result<Var> {
    let (_, grad) = critic_input_gradient(g, critic, bound, &batch.q_tilde, &batch.alpha_tilde)?;
    let diff = batch.q1.zip_map(&batch.q2, |a, b| a - b);
    let diff = g.leaf(diff);
    let dir = g.dot_rows(grad, diff)?;
    let sq = g.square(dir);
    let m = g.mean_all(sq);
    Ok(g.scale(m, lambda))
}

/// Row-wise `ν_i·real_i + (1 − ν_i)·fake_i`.
pub fn penalty_points(real: &Tensor, fake: &Tensor, nu: &[f64]) -> Result<Tensor> {
    crate::tempering::interpolate(nu, real, fake)
}

fn squared_input_norms(g: &mut Graph, critic: &Mlp, bound: &BoundMlp, points: &Tensor, alpha: &[f64]) -> Result<Var> {
    let (_, grad) = critic_input_gradient(g, critic, bound, points, alpha)?;
    let sq = g.square(grad);
    Ok(g.sum_cols(sq))
}

/// `λ_MP · max_i ‖∇ D(x̃_i)‖²`.
pub fn mp_penalty(g: &mut Graph, critic: &Mlp, bound: &BoundMlp, points: &Tensor, alpha: &[f64], lambda: f64) -> Result<Var> {
    let norms = squared_input_norms(g, critic, bound, points, alpha)?;
    let m = g.max_all(norms);
    Ok(g.scale(m, lambda))
}

/// `λ_GP · mean_i (‖∇ D(x̃_i)‖ − 1)²`.
pub fn gp_penalty(g: &mut Graph, critic: &Mlp, bound: &BoundMlp, points: &Tensor, alpha: &[f64], lambda: f64) -> Result<Var> {
    let norms = squared_input_norms(g, critic, bound, points, alpha)?;
    let n = g.sqrt(norms)?;
    let c = g.affine(n, 1.0, -1.0);
    let sq = g.square(c);
    let m = g.mean_all(sq);
    Ok(g.scale(m, lambda))
}

/// `(λ/2) · mean_i ‖∇ D(x_i)‖²` over real rows.
pub fn r1_penalty(g: &mut Graph, critic: &Mlp, bound: &BoundMlp, real: &Tensor, alpha: &[f64], lambda: f64) -> Result<Var> {
    let norms = squared_input_norms(g, critic, bound, real, alpha)?;
    let m = g.mean_all(norms);
    Ok(g.scale(m, 0.5 * lambda))
}

/// Group weights below this are treated as an empty group.
const MIN_GROUP_WEIGHT: f64 = 1e-6;

/// `λ_f · |E[Ỹ·Ã]/E[Ã] − E[Ỹ·(1 − Ã)]/E[1 − Ã]|` over soft generator columns.
///
/// Returns a zero constant, with a warning, when either soft group is empty.
pub fn fairness_penalty(g: &mut Graph, gen_output: Var, y_col: usize, a_col: usize, lambda: f64) -> Result<Var> {
    let y = g.slice_cols(gen_output, y_col, 1)?;
    let a = g.slice_cols(gen_output, a_col, 1)?;
    let not_a = g.affine(a, -1.0, 1.0);
    let wa = g.mean_all(a);
    let wn = g.mean_all(not_a);
    if g.value(wa).item() < MIN_GROUP_WEIGHT || g.value(wn).item() < MIN_GROUP_WEIGHT {
        log::warn!("fairness penalty skipped: a soft sensitive group has no weight in this batch");
        return Ok(g.scalar(0.0));
    }
    let ya = g.mul(y, a)?;
    let ya = g.mean_all(ya);
    let yn = g.mul(y, not_a)?;
    let yn = g.mean_all(yn);
    let m1 = g.div(ya, wa)?;
    let m0 = g.div(yn, wn)?;
    let d = g.sub(m1, m0)?;
    let d = g.abs(d);
    Ok(g.scale(d, lambda))
}
