//! Membership-count pretest.
//!
//! For a candidate table with `i` treated members on top of the `r0` known
//! control members, the treated member count is hypergeometric under the
//! design. Candidate counts whose observed imbalance would itself be a
//! `beta`-level rejection are pruned from the worst-case search, and the
//! final level is charged `beta` for the screening. The pretest p-value is
//! computed exactly by summing the hypergeometric mass, not by Monte Carlo.

use crate::randomization::n_a1_pmf;
use crate::stats::dim_from_counts;
use serde::{Deserialize, Serialize};

/// Direction of the pretest comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretestSide {
    /// Two-sided: count mass where the absolute imbalance is at least the
    /// observed absolute imbalance. The default.
    TwoSided,
    /// One-sided lower tail: count mass where the imbalance is at most the
    /// observed imbalance.
    PaperLower,
}

impl Default for PretestSide {
    fn default() -> Self {
        PretestSide::TwoSided
    }
}

/// Outcome of pruning: per-count p-values and the admissible counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    /// `p[i]` is the pretest p-value for the table cardinality `r0 + i`.
    pub p: Vec<f64>,
    /// Values of `i` (extra treated members) with `p[i] >= beta`, ascending.
    pub admissible: Vec<usize>,
    pub beta: f64,
    pub side: PretestSide,
}

/// Exact pretest p-value for a table with `r0` control members and `i`
/// treated members, in a design with `n` units and `n1` treated.
pub fn pretest_p(n: usize, n1: usize, r0: usize, i: usize, side: PretestSide) -> f64 {
    let n0 = n - n1;
    let n_a = r0 + i;
    let dim_obs = dim_from_counts(i, r0, n1, n0);
    let pmf = n_a1_pmf(n, n1, n_a);
    let mut p = 0.0;
    for (k, &mass) in pmf.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let dim_k = dim_from_counts(k, n_a - k, n1, n0);
        let hit = match side {
            PretestSide::TwoSided => dim_k.abs() >= dim_obs.abs(),
            PretestSide::PaperLower => dim_obs >= dim_k,
        };
        if hit {
            p += mass;
        }
    }
    p
}

/// Compute pretest p-values for every candidate treated member count
/// `i = 0..=n_free` and keep those with `p >= beta`.
pub fn prune(
    n: usize,
    n1: usize,
    r0: usize,
    n_free: usize,
    beta: f64,
    side: PretestSide,
) -> PruneResult {
    let p: Vec<f64> = (0..=n_free).map(|i| pretest_p(n, n1, r0, i, side)).collect();
    let admissible = (0..=n_free).filter(|&i| p[i] >= beta).collect();
    PruneResult { p, admissible, beta, side }
}
