//! Geometric repair of a single covariate toward the two-group
//! Wasserstein median.

use crate::error::{Error, Result};

/// Left-continuous empirical quantile `F⁻¹(k/n)` of a sorted sample, evaluated
/// at the level `k/n` expressed on another sample's grid of size `m`:
/// the smallest value whose CDF reaches `k/n`.
fn quantile_at(sorted: &[f64], k: usize, n: usize) -> f64 {
    let m = sorted.len();
    let idx = (k * m).div_ceil(n).max(1) - 1;
    sorted[idx]
}

/// Maps each value `c` of group `a` to
/// `(1 − λ)·F_a⁻¹(q) + λ·(F₀⁻¹(q) + F₁⁻¹(q))/2` with `q = F_a(c)`.
///
/// For `λ = 1` and groups of equal size the two repaired groups have identical
/// empirical quantile functions.
pub fn geo_repair(column: &[f64], groups: &[bool], lambda: f64) -> Result<Vec<f64>> {
    if column.len() != groups.len() {
        return Err(Error::invalid(format!("{} values for {} group labels", column.len(), groups.len())));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("repair strength {lambda} outside [0, 1]")));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in repaired column"));
    }
    let mut sorted: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (&c, &a) in column.iter().zip(groups) {
        sorted[a as usize].push(c);
    }
    if sorted.iter().any(Vec::is_empty) {
        return Err(Error::invalid("geo_repair needs both groups non-empty"));
    }
    for s in &mut sorted {
        s.sort_by(f64::total_cmp);
    }
    Ok(column
        .iter()
        .zip(groups)
        .map(|(&c, &a)| {
            let own = &sorted[a as usize];
            let n = own.len();
            // F_a(c) = k/n with k the count of group values ≤ c.
            let k = own.partition_point(|&v| v <= c);
            let f_own = quantile_at(own, k, n);
            let f_other = quantile_at(&sorted[!a as usize], k, n);
            let median = 0.5 * (f_own + f_other);
            (1.0 - lambda) * f_own + lambda * median
        })
        .collect())
}
