//! Exact optimal transport between equal-count sample sets, solved as a
//! min-cost assignment. This is the slow reference path: the closed-form 1-D
//! distance in the parent module is checked against it, and the marginal
//! lower bound on joint samples is certified with it.

use crate::error::{Error, Result};

/// Ground metric between sample points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroundMetric {
    L1,
    L2,
}

impl GroundMetric {
    fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            GroundMetric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            GroundMetric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Largest point count accepted by the cubic solver.
pub const MAX_OT_POINTS: usize = 128;

/// Minimum-cost perfect matching on a dense square cost matrix (row-major),
/// by shortest augmenting paths with dual potentials, O(n^3).
///
/// Returns the column assigned to each row and the total cost.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n, "cost matrix must be n*n");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // row potential u, column potential v; column n is the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    // p[j] = row currently assigned to column j (n = unassigned).
    let mut p = vec![n; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 0..n {
        p[n] = i;
        let mut j0 = n;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = j0;
            for j in 0..n {
                if !used[j] {
                    let cur = cost[i0 * n + j] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == n {
                break;
            }
        }
        // Augment along the recorded path.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == n {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    let mut total = 0.0;
    for j in 0..n {
        row_to_col[p[j]] = j;
        total += cost[p[j] * n + j];
    }
    (row_to_col, total)
}

/// Exact Wasserstein-1 distance between two equal-count point sets under the
/// given ground metric: the mean ground distance over the optimal pairing.
///
/// Cubic in the point count, so inputs are capped at [`MAX_OT_POINTS`].
pub fn exact_ot_oracle(xs: &[Vec<f64>], ys: &[Vec<f64>], metric: GroundMetric) -> Result<f64> {
    let n = xs.len();
    if n == 0 || ys.len() != n {
        return Err(Error::invalid(format!(
            "exact OT needs equal nonempty point counts, got {} and {}",
            n,
            ys.len()
        )));
    }
    if n > MAX_OT_POINTS {
        return Err(Error::invalid(format!(
            "exact OT is cubic in the point count; {n} exceeds the cap of {MAX_OT_POINTS}"
        )));
    }
    let dim = xs[0].len();
    for p in xs.iter().chain(ys.iter()) {
        if p.len() != dim {
            return Err(Error::invalid("inconsistent point dimensions"));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite coordinate in OT input"));
        }
    }
    let mut cost = vec![0.0; n * n];
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            cost[i * n + j] = metric.dist(x, y);
        }
    }
    let (_, total) = min_cost_assignment(&cost, n);
    Ok(total / n as f64)
}
