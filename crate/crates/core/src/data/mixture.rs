//! Isotropic Gaussian mixtures and the toy presets.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub centers: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Component weights; uniform when empty.
    #[serde(default)]
    pub weights: Vec<f64>,
}

impl MixtureSpec {
    /// Eight modes on a circle of radius 1.5, `σ = 0.1`.
    pub fn ring8() -> Self {
        let centers = (0..8)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
                vec![1.5 * t.cos(), 1.5 * t.sin()]
            })
            .collect();
        Self {
            centers,
            sigma: 0.1,
            weights: Vec::new(),
        }
    }

    /// Two 1-D modes at `±mu2`, `σ = 0.1`.
    pub fn two1d(mu2: f64) -> Self {
        Self {
            centers: vec![vec![-mu2], vec![mu2]],
            sigma: 0.1,
            weights: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn weights(&self) -> Vec<f64> {
        if self.weights.is_empty() {
            vec![1.0 / self.centers.len() as f64; self.centers.len()]
        } else {
            self.weights.clone()
        }
    }

    pub fn centers_tensor(&self) -> Tensor {
        Tensor::from_rows(&self.centers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() || self.dim() == 0 {
            return Err(Error::Config("mixture needs at least one non-empty center".into()));
        }
        if self.centers.iter().any(|c| c.len() != self.dim() || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("mixture centers must be finite and of equal dimension".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("mixture sigma={} must be finite and non-negative", self.sigma)));
        }
        let w = self.weights();
        if w.len() != self.centers.len() || w.iter().any(|&v| !(v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("mixture weights must be a probability vector, one per center".into()));
        }
        Ok(())
    }
}

/// `n` i.i.d. draws together with the component each came from.
pub fn sample_mixture_labeled(spec: &MixtureSpec, n: usize, rng: &mut impl Rng) -> Result<(Tensor, Vec<usize>)> {
    spec.validate()?;
    let pick = WeightedIndex::new(spec.weights()).map_err(|e| Error::Config(e.to_string()))?;
    let d = spec.dim();
    let mut out = Tensor::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = pick.sample(rng);
        labels.push(k);
        for (j, slot) in out.row_mut(i).iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            *slot = spec.centers[k][j] + spec.sigma * e;
        }
    }
    Ok((out, labels))
}

pub fn sample_mixture(spec: &MixtureSpec, n: usize, rng: &mut impl Rng) -> Result<Tensor> {
    Ok(sample_mixture_labeled(spec, n, rng)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ring8_geometry() {
        let s = MixtureSpec::ring8();
        assert_eq!(s.centers.len(), 8);
        for c in &s.centers {
            assert!((c[0].hypot(c[1]) - 1.5).abs() < 1e-15);
        }
        assert!((s.centers[2][1] - 1.5).abs() < 1e-15);
        assert_eq!(s.sigma, 0.1);
    }

    #[test]
    fn zero_sigma_lands_on_centers() {
        let spec = MixtureSpec {
            sigma: 0.0,
            ..MixtureSpec::two1d(3.0)
        };
        let x = sample_mixture(&spec, 100, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 3.0 || v == -3.0));
    }

    #[test]
    fn component_frequencies_follow_weights() {
        let spec = MixtureSpec {
            weights: vec![0.2, 0.3, 0.5],
            centers: vec![vec![0.0], vec![1.0], vec![2.0]],
            sigma: 0.1,
        };
        let n = 100_000;
        let (_, labels) = sample_mixture_labeled(&spec, n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (k, &w) in spec.weights.iter().enumerate() {
            let f = labels.iter().filter(|&&l| l == k).count() as f64 / n as f64;
            let se = (w * (1.0 - w) / n as f64).sqrt();
            assert!((f - w).abs() < 4.0 * se, "component {k}: {f} vs {w}");
        }
    }

    #[test]
    fn within_component_spread_is_sigma() {
        let spec = MixtureSpec::two1d(1.5);
        let (x, labels) = sample_mixture_labeled(&spec, 50_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let resid: Vec<f64> = (0..x.rows()).map(|i| x.get(i, 0) - spec.centers[labels[i]][0]).collect();
        let var = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        assert!((var - 0.01).abs() < 0.0005, "{var}");
    }

    #[test]
    fn validation() {
        let bad = MixtureSpec {
            weights: vec![0.5, 0.6],
            ..MixtureSpec::two1d(1.0)
        };
        assert!(bad.validate().is_err());
        assert!(MixtureSpec { centers: vec![], sigma: 0.1, weights: vec![] }.validate().is_err());
    }
}
