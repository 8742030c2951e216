//! Mode coverage of a sample against known mixture centers.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Share of all samples a mode must attract to count as covered.
pub const COVERAGE_MASS: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: usize,
    /// Fraction of all samples assigned to each center.
    pub fractions: Vec<f64>,
    /// Fraction of samples that landed within `radius` of their nearest center.
    pub assigned: f64,
}

/// Assigns every sample to its nearest center when within `radius`; a mode
/// counts as covered once it holds [`COVERAGE_MASS`] of the samples.
pub fn mode_coverage(samples: &Tensor, centers: &Tensor, radius: f64) -> Result<Coverage> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("coverage radius {radius} must be positive")));
    }
    if samples.cols() != centers.cols() {
        return Err(Error::invalid(format!(
            "samples have {} columns, centers {}",
            samples.cols(),
            centers.cols()
        )));
    }
    if samples.is_empty() || centers.is_empty() {
        return Err(Error::invalid("mode_coverage on an empty sample or center set"));
    }
    let r2 = radius * radius;
    let mut counts = vec![0usize; centers.rows()];
    for i in 0..samples.rows() {
        let x = samples.row(i);
        let (best, d2) = (0..centers.rows())
            .map(|k| {
                let d2: f64 = x.iter().zip(centers.row(k)).map(|(a, b)| (a - b) * (a - b)).sum();
                (k, d2)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("centers is non-empty");
        if d2 <= r2 {
            counts[best] += 1;
        }
    }
    let n = samples.rows() as f64;
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(Coverage {
        covered: fractions.iter().filter(|&&f| f >= COVERAGE_MASS).count(),
        assigned: counts.iter().sum::<usize>() as f64 / n,
        fractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(k: usize, radius: f64) -> Tensor {
        Tensor::from_fn(k, 2, |i, j| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            radius * if j == 0 { t.cos() } else { t.sin() }
        })
    }

    #[test]
    fn samples_on_every_center() {
        let centers = ring(8, 1.5);
        let idx: Vec<usize> = (0..800).map(|i| i % 8).collect();
        let c = mode_coverage(&centers.select_rows(&idx), &centers, 0.4).unwrap();
        assert_eq!(c.covered, 8);
        assert_eq!(c.assigned, 1.0);
        assert!(c.fractions.iter().all(|&f| f == 0.125));
    }

    #[test]
    fn collapsed_sample_covers_one_mode() {
        let centers = ring(8, 1.5);
        let c = mode_coverage(&centers.select_rows(&[3; 50]), &centers, 0.4).unwrap();
        assert_eq!(c.covered, 1);
        assert_eq!(c.fractions[3], 1.0);
    }

    #[test]
    fn far_samples_are_unassigned() {
        let centers = ring(8, 1.5);
        let c = mode_coverage(&Tensor::zeros(10, 2), &centers, 0.4).unwrap();
        assert_eq!((c.covered, c.assigned), (0, 0.0));
    }

    #[test]
    fn tiny_share_is_not_coverage() {
        // 1 of 100 samples (1%) sits on mode 1; the rest on mode 0.
        let centers = ring(2, 1.0);
        let mut idx = vec![0; 99];
        idx.push(1);
        let c = mode_coverage(&centers.select_rows(&idx), &centers, 0.1).unwrap();
        assert_eq!(c.covered, 1);
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(mode_coverage(&Tensor::zeros(1, 2), &ring(2, 1.0), 0.0).is_err());
    }
}
