//! Monte-Carlo moments of the two-component decomposition of the convex
//! interpolation of a symmetric 1-D Gaussian mixture.
//!
//! With `X₁, X₂` i.i.d. from `½N(μ₁, σ²) + ½N(μ₂, σ²)` and `α ~ Unif(0, 1)`,
//! `αX₁ + (1 − α)X₂` has the same law as the equal mixture of
//! `α u + (1 − α)X₂` (`u ~ N(μ₁, σ²)`) and `α v + (1 − α)X₂`
//! (`v ~ N(μ₂, σ²)`) with `α ~ Unif(0.5, 1)`. The gap between the two
//! component means is `3|μ₁ − μ₂|/4` and each component has variance
//! `2σ²/3 + 5(μ₁ − μ₂)²/192`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest Monte-Carlo size accepted.
pub const MIN_DRAWS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop3Estimate {
    /// Estimated `|μ₁* − μ₂*|`.
    pub gap: f64,
    pub gap_se: f64,
    /// Estimated common component standard deviation `σ*`.
    pub sigma: f64,
    pub sigma_se: f64,
}

/// Closed-form component moments `(|μ₁* − μ₂*|, σ*)`.
pub fn prop3_closed_form(mu1: f64, mu2: f64, sigma: f64) -> (f64, f64) {
    let delta2 = (mu1 - mu2).powi(2);
    (0.75 * (mu1 - mu2).abs(), (2.0 * sigma * sigma / 3.0 + 5.0 * delta2 / 192.0).sqrt())
}

/// Running moments about a shift, for the sample variance and its standard
/// error.
#[derive(Default)]
struct Moments {
    n: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
    shift: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        let d = x - self.shift;
        self.n += 1.0;
        self.s1 += d;
        self.s2 += d * d;
        self.s3 += d * d * d;
        self.s4 += d * d * d * d;
    }

    fn mean(&self) -> f64 {
        self.shift + self.s1 / self.n
    }

    /// Central moments `(m2, m4)` of the sample.
    fn central(&self) -> (f64, f64) {
        let n = self.n;
        let m1 = self.s1 / n;
        let e2 = self.s2 / n;
        let e3 = self.s3 / n;
        let e4 = self.s4 / n;
        let m2 = e2 - m1 * m1;
        let m4 = e4 - 4.0 * m1 * e3 + 6.0 * m1 * m1 * e2 - 3.0 * m1.powi(4);
        (m2, m4)
    }
}

/// Draws `n_mc` values of the decomposed interpolation and estimates the gap
/// between component means and the pooled component standard deviation,
/// each with a delta-method standard error.
pub fn check_prop3_moments(mu1: f64, mu2: f64, sigma: f64, n_mc: usize, seed: u64) -> Result<Prop3Estimate> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma={sigma} must be positive")));
    }
    if n_mc < MIN_DRAWS {
        return Err(Error::invalid(format!("n_mc={n_mc} below {MIN_DRAWS}")));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = 0.5 * (mu1 + mu2);
    let mut comp = [
        Moments { shift: mu1 * 0.75 + centre * 0.25, ..Default::default() },
        Moments { shift: mu2 * 0.75 + centre * 0.25, ..Default::default() },
    ];
    for _ in 0..n_mc {
        let k = rng.random_range(0..2usize);
        let alpha: f64 = rng.random_range(0.5..1.0);
        let own = [mu1, mu2][k] + noise.sample(&mut rng);
        let other = if rng.random::<bool>() { mu1 } else { mu2 } + noise.sample(&mut rng);
        comp[k].push(alpha * own + (1.0 - alpha) * other);
    }
    if comp.iter().any(|c| c.n < 2.0) {
        return Err(Error::invalid("a mixture component received fewer than two draws"));
    }
    let gap = (comp[0].mean() - comp[1].mean()).abs();
    let (v0, k0) = comp[0].central();
    let (v1, k1) = comp[1].central();
    let gap_se = (v0 / comp[0].n + v1 / comp[1].n).sqrt();
    // Both components share σ*, so pool their variances by count.
    let n = comp[0].n + comp[1].n;
    let pooled = (comp[0].n * v0 + comp[1].n * v1) / n;
    let var_se = ((k0 - v0 * v0) * comp[0].n + (k1 - v1 * v1) * comp[1].n).sqrt() / n;
    let sigma_hat = pooled.sqrt();
    Ok(Prop3Estimate {
        gap,
        gap_se,
        sigma: sigma_hat,
        sigma_se: var_se / (2.0 * sigma_hat),
    })
}
