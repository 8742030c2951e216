//! Per-item loss and per-sample gradient statistics of the critic objective.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::error::Result;
use crate::nets::{critic_forward, Mlp};
use crate::objectives::{critic_loss, per_item_losses, LossKind};

/// Which critic parameters enter the gradient-variance trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradScope {
    /// Final dense layer only, from a closed form over penultimate activations.
    #[default]
    LastLayer,
    /// Every parameter, one backward pass per batch item.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchStats {
    /// Mean of `L_i`, the critic objective without penalty.
    pub mean_loss: f64,
    /// Sample variance of `L_i` across items (`n − 1` denominator, 0 for one item).
    pub loss_var: f64,
    /// Sum over parameters of the sample variance of `∂L_i/∂w`.
    pub grad_var_trace: f64,
}

/// Running elementwise mean and squared deviations (Welford).
#[derive(Clone, Debug, Default)]
pub struct ElementwiseVariance {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ElementwiseVariance {
    pub fn push(&mut self, x: &[f64]) {
        if self.n == 0 {
            self.mean = vec![0.0; x.len()];
            self.m2 = vec![0.0; x.len()];
        }
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sum of the `n − 1` sample variances; 0 with fewer than two samples.
    pub fn trace(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2.iter().sum::<f64>() / (self.n - 1) as f64
    }
}

pub fn sample_variance(x: &[f64]) -> f64 {
    let mut acc = ElementwiseVariance::default();
    for &v in x {
        acc.push(&[v]);
    }
    acc.trace()
}

/// Statistics of `L_i = ℓ(D(real_i, α_i), D(fake_i, α′_i))` over a batch.
pub fn batch_statistics(
    critic: &Mlp,
    kind: LossKind,
    real: &Tensor,
    alpha_real: &[f64],
    fake: &Tensor,
    alpha_fake: &[f64],
    scope: GradScope,
) -> Result<BatchStats> {
    let n = real.rows();
    let mut g = Graph::new();
    let bound = critic.bind(&mut g);
    let rv = g.leaf(real.clone());
    let fv = g.leaf(fake.clone());
    let tr = critic_forward(&mut g, critic, &bound, rv, alpha_real)?;
    let tf = critic_forward(&mut g, critic, &bound, fv, alpha_fake)?;
    let items = per_item_losses(kind, g.value(tr.output), g.value(tf.output))?;
    let mean_loss = items.iter().sum::<f64>() / n as f64;
    let loss_var = sample_variance(&items);

    let grad_var_trace = match scope {
        GradScope::LastLayer => {
            let loss = critic_loss(&mut g, kind, tr.output, tf.output)?;
            // n·∂(mean L)/∂pre_i = ∂L_i/∂pre_i since item i touches only row i.
            let grads = g.backward(loss, &[tr.pre_head, tf.pre_head], false)?;
            let (cr, cf) = (g.value(grads[0]).clone(), g.value(grads[1]).clone());
            let (hr, hf) = (g.value(tr.penultimate), g.value(tf.penultimate));
            let mut acc = ElementwiseVariance::default();
            let width = hr.cols();
            let mut row = vec![0.0; width + 1];
            for i in 0..n {
                let a = cr.get(i, 0) * n as f64;
                let b = cf.get(i, 0) * n as f64;
                for (k, slot) in row.iter_mut().take(width).enumerate() {
                    *slot = a * hr.get(i, k) + b * hf.get(i, k);
                }
                row[width] = a + b;
                acc.push(&row);
            }
            acc.trace()
        }
        GradScope::Full => {
            let mut acc = ElementwiseVariance::default();
            for i in 0..n {
                let mut g = Graph::new();
                let bound = critic.bind(&mut g);
                let rv = g.leaf(real.select_rows(&[i]));
                let fv = g.leaf(fake.select_rows(&[i]));
                let dr = critic_forward(&mut g, critic, &bound, rv, &alpha_real[i..=i])?.output;
                let df = critic_forward(&mut g, critic, &bound, fv, &alpha_fake[i..=i])?.output;
                let loss = critic_loss(&mut g, kind, dr, df)?;
                let grads = g.backward(loss, &bound.vars(), false)?;
                let flat: Vec<f64> = grads.iter().flat_map(|v| g.value(*v).as_slice().to_vec()).collect();
                acc.push(&flat);
            }
            acc.trace()
        }
    };
    Ok(BatchStats {
        mean_loss,
        loss_var,
        grad_var_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Activation, MlpSpec, OutputHead};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn welford_matches_two_pass() {
        let x = [1.0, 4.0, -2.0, 7.5, 0.25];
        let mean = x.iter().sum::<f64>() / 5.0;
        let want = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((sample_variance(&x) - want).abs() < 1e-12);
        assert_eq!(sample_variance(&[3.0]), 0.0);
    }

    fn random_batch(n: usize, seed: u64) -> (Tensor, Tensor, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real = Tensor::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
        let fake = Tensor::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
        let alpha = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        (real, fake, alpha)
    }

    #[test]
    fn last_layer_closed_form_agrees_with_full_scope_on_a_linear_critic() {
        // A single dense layer is its own last layer, so both scopes must agree.
        let spec = MlpSpec::uniform(2, vec![], Activation::Relu, 1, OutputHead::Linear).unwrap();
        let critic = Mlp::new(spec, 1).unwrap();
        let (real, fake, alpha) = random_batch(40, 2);
        for kind in [LossKind::Nd, LossKind::Pd] {
            let a = batch_statistics(&critic, kind, &real, &alpha, &fake, &alpha, GradScope::LastLayer).unwrap();
            let b = batch_statistics(&critic, kind, &real, &alpha, &fake, &alpha, GradScope::Full).unwrap();
            assert!((a.grad_var_trace - b.grad_var_trace).abs() < 1e-10 * b.grad_var_trace.max(1.0));
            assert_eq!(a.loss_var, b.loss_var);
        }
    }

    #[test]
    fn last_layer_trace_matches_per_sample_backward() {
        let spec = MlpSpec::uniform(2, vec![6, 5], Activation::Tanh, 1, OutputHead::Sigmoid).unwrap();
        let critic = Mlp::new(spec, 3).unwrap();
        let (real, fake, alpha) = random_batch(25, 4);
        let got = batch_statistics(&critic, LossKind::Jsd, &real, &alpha, &fake, &alpha, GradScope::LastLayer)
            .unwrap()
            .grad_var_trace;
        let mut acc = ElementwiseVariance::default();
        for i in 0..25 {
            let mut g = Graph::new();
            let bound = critic.bind(&mut g);
            let rv = g.leaf(real.select_rows(&[i]));
            let fv = g.leaf(fake.select_rows(&[i]));
            let dr = critic_forward(&mut g, &critic, &bound, rv, &alpha[i..=i]).unwrap().output;
            let df = critic_forward(&mut g, &critic, &bound, fv, &alpha[i..=i]).unwrap().output;
            let loss = critic_loss(&mut g, LossKind::Jsd, dr, df).unwrap();
            let (w, b) = bound.last_layer();
            let gr = g.backward(loss, &[w, b], false).unwrap();
            let mut flat = g.value(gr[0]).as_slice().to_vec();
            flat.extend_from_slice(g.value(gr[1]).as_slice());
            acc.push(&flat);
        }
        assert!((got - acc.trace()).abs() < 1e-10 * acc.trace().max(1e-12));
    }

    #[test]
    fn constant_critic_has_no_gradient_variance() {
        // All-zero ReLU network: every hidden activation is 0, so no parameter
        // gradient depends on the inputs.
        let spec = MlpSpec::uniform(2, vec![4, 4], Activation::Relu, 1, OutputHead::Linear).unwrap();
        let init = Mlp::new(spec.clone(), 0).unwrap();
        let critic = Mlp::from_parts(spec, init.params.zeros_like()).unwrap();
        let (real, fake, alpha) = random_batch(10, 5);
        for scope in [GradScope::LastLayer, GradScope::Full] {
            let s = batch_statistics(&critic, LossKind::Nd, &real, &alpha, &fake, &alpha, scope).unwrap();
            assert_eq!(s.loss_var, 0.0);
            assert_eq!(s.grad_var_trace, 0.0);
        }
    }

    #[test]
    fn single_item_batch_has_zero_variance() {
        let spec = MlpSpec::uniform(2, vec![3], Activation::Tanh, 1, OutputHead::Linear).unwrap();
        let critic = Mlp::new(spec, 6).unwrap();
        let (real, fake, alpha) = random_batch(1, 7);
        let s = batch_statistics(&critic, LossKind::Nd, &real, &alpha, &fake, &alpha, GradScope::Full).unwrap();
        assert_eq!((s.loss_var, s.grad_var_trace), (0.0, 0.0));
    }
}
