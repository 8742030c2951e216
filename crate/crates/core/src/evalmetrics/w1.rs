//! 1-Wasserstein distance between two empirical samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Largest sample count solved exactly in more than one dimension.
pub const EXACT_ASSIGNMENT_CAP: usize = 1024;

/// Fixed seed for the deterministic subsample above the cap.
const SUBSAMPLE_SEED: u64 = 0x5157_31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum W1Method {
    #[serde(rename = "sorted-1d")]
    Sorted1d,
    ExactAssignment,
    Subsampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct W1Result {
    pub value: f64,
    pub method: W1Method,
}

/// Empirical W1 between the rows of `a` and `b`.
///
/// One dimension is solved exactly through quantile functions, which also
/// covers unequal counts. Otherwise the counts must agree and the optimal
/// matching under the Euclidean cost is found exactly; past
/// [`EXACT_ASSIGNMENT_CAP`] rows both samples are first thinned to the cap by a
/// fixed-seed draw without replacement.
pub fn w1_distance(a: &Tensor, b: &Tensor) -> Result<W1Result> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("w1_distance on an empty sample"));
    }
    if a.cols() != b.cols() {
        return Err(Error::invalid(format!("w1_distance: dimensions {} and {} differ", a.cols(), b.cols())));
    }
    if a.cols() == 1 {
        return Ok(W1Result {
            value: w1_sorted_1d(a.as_slice(), b.as_slice()),
            method: W1Method::Sorted1d,
        });
    }
    if a.rows() != b.rows() {
        return Err(Error::invalid(format!(
            "w1_distance needs equal counts in {} dimensions, got {} and {}",
            a.cols(),
            a.rows(),
            b.rows()
        )));
    }
    if a.rows() <= EXACT_ASSIGNMENT_CAP {
        return Ok(W1Result {
            value: w1_exact(a, b),
            method: W1Method::ExactAssignment,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
    let mut thin = |t: &Tensor| {
        let mut idx = rand::seq::index::sample(&mut rng, t.rows(), EXACT_ASSIGNMENT_CAP).into_vec();
        idx.sort_unstable();
        t.select_rows(&idx)
    };
    let (sa, sb) = (thin(a), thin(b));
    Ok(W1Result {
        value: w1_exact(&sa, &sb),
        method: W1Method::Subsampled,
    })
}

/// `∫₀¹ |F⁻¹(u) − G⁻¹(u)| du` for two 1-D empirical laws.
pub fn w1_sorted_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    // Walk the merged quantile breakpoints k/n and l/m with integer numerators
    // so that coinciding breakpoints are detected exactly.
    let (n, m) = (a.len() as u128, b.len() as u128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0u128; // in units of 1/(n·m)
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i as u128 + 1) * m;
        let next_b = (j as u128 + 1) * n;
        let next = next_a.min(next_b);
        total += (next - prev) as f64 * (a[i] - b[j]).abs();
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    total / (n * m) as f64
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn w1_exact(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.rows();
    let cost: Vec<f64> = (0..n * n).map(|k| euclidean(a.row(k / n), b.row(k % n))).collect();
    let assignment = solve_assignment(&cost, n);
    assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64
}

/// Minimum-cost perfect matching on a dense `n × n` row-major cost matrix by
/// successive shortest augmenting paths with dual potentials, `O(n³)`.
/// Returns the column assigned to each row.
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    if n == 0 {
        return Vec::new();
    }
    // 1-based with column 0 as the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = row[j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        while j0 != 0 {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}
