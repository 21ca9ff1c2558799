//! Gap costs between source-simulator and target rollout data.
//!
//! Three families:
//! - [`wass_cost`]: sum over the position / velocity / action channel groups
//!   of the mean per-channel 1-D Wasserstein distance, computed on normalized
//!   marginal samples. Needs no privileged state and no time alignment.
//! - [`match_s_cost`]: time-aligned full-state MSE with the source reset to
//!   the target state every H control steps (privileged).
//! - [`match_o_cost`]: time-aligned proprioceptive MSE with no resets.

pub mod assignment;
mod matchers;

pub use assignment::{exact_ot_oracle, min_cost_assignment, GroundMetric, MAX_OT_POINTS};
pub use matchers::{match_o_cost, match_s_cost};

use crate::error::{Error, Result};
use crate::trajdata::{MarginalSamples, Normalizer, ACT_GROUPS, N_CHANNELS};

/// Wasserstein-1 distance between two 1-D sample sets, in sample units.
///
/// For equal counts this is the mean absolute difference of the sorted
/// samples; for unequal counts it is the L1 distance between the two
/// empirical quantile functions. O(n log n) either way.
pub fn wasserstein_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::invalid("wasserstein_1d needs nonempty samples"));
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("wasserstein_1d got a non-finite sample"));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    Ok(w1_sorted(&a, &b))
}

/// W1 on already-sorted sample sets.
pub(crate) fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == m {
        let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        return sum / n as f64;
    }
    // Integrate |F^-1(u) - G^-1(u)| over u in (0,1]. Both quantile functions
    // are step functions with breakpoints at multiples of 1/n and 1/m.
    let (nf, mf) = (n as f64, m as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut p = 0.0;
    let mut total = 0.0;
    loop {
        let ci = (i + 1) as f64 / nf;
        let cj = (j + 1) as f64 / mf;
        let q = ci.min(cj);
        total += (q - p) * (a[i] - b[j]).abs();
        p = q;
        if ci <= q {
            i += 1;
        }
        if cj <= q {
            j += 1;
        }
        if i == n || j == m {
            break;
        }
    }
    total
}

/// Target-side data for [`wass_cost`], normalized and sorted once so repeated
/// evaluations against the same target only pay for the source side.
pub struct PreparedWassTarget {
    sorted: Vec<Vec<f64>>,
    norm: Normalizer,
}

impl PreparedWassTarget {
    pub fn new(target: &MarginalSamples, norm: &Normalizer) -> Result<Self> {
        target.check_finite()?;
        let mut sorted = Vec::with_capacity(N_CHANNELS);
        for c in 0..N_CHANNELS {
            let mut v = norm.apply_channel(c, target.channel(c));
            v.sort_unstable_by(f64::total_cmp);
            sorted.push(v);
        }
        Ok(PreparedWassTarget {
            sorted,
            norm: norm.clone(),
        })
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.norm
    }
}

/// Marginal Wasserstein gap cost between source and target samples.
///
/// Both sides are mapped through the target-fitted normalizer; each of the
/// three channel groups (positions, velocities, actions) contributes the mean
/// W1 over its six channels, and the cost is the sum of the group means.
pub fn wass_cost(
    sim: &MarginalSamples,
    target: &MarginalSamples,
    norm: &Normalizer,
) -> Result<f64> {
    let prepared = PreparedWassTarget::new(target, norm)?;
    wass_cost_prepared(sim, &prepared)
}

/// [`wass_cost`] against a pre-sorted target.
pub fn wass_cost_prepared(sim: &MarginalSamples, target: &PreparedWassTarget) -> Result<f64> {
    sim.check_finite()?;
    if sim.len() == 0 {
        return Err(Error::invalid("wass_cost got an empty source sample set"));
    }
    let mut cost = 0.0;
    for group in ACT_GROUPS {
        let mut group_sum = 0.0;
        for c in group.clone() {
            let mut s = target.norm.apply_channel(c, sim.channel(c));
            s.sort_unstable_by(f64::total_cmp);
            group_sum += w1_sorted(&s, &target.sorted[c]);
        }
        cost += group_sum / group.len() as f64;
    }
    Ok(cost)
}
