//! Complete randomization: sampling, enumeration, and the distribution a
//! completely randomized design induces on a fixed set of units.
//!
//! For a design with `n` units and `n1` treated, the number of treated units
//! inside any fixed subset of size `m` is hypergeometric, and conditional on
//! that count the treated positions within the subset are again completely
//! randomized. Restricting Monte Carlo to the subset ("induced" draws) is
//! what makes the worst-case searches tractable.

use crate::comb::{choose_exact, ln_choose};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A full treatment assignment: `bits[i]` is unit i's treatment indicator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentVector {
    pub bits: Vec<bool>,
}

impl AssignmentVector {
    pub fn n_treated(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// A treatment pattern restricted to a fixed subset of units ("slots").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedAssignment {
    pub bits: Vec<bool>,
}

impl InducedAssignment {
    pub fn n_treated(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Draw one assignment from the completely randomized design `CR(n, n1)`.
///
/// Uses selection sampling: scan the units once, accepting each with
/// probability (still needed)/(still available). One uniform per unit, so a
/// stream position identifies a draw uniquely.
pub fn sample_cr(n: usize, n1: usize, rng: &mut RngStream) -> AssignmentVector {
    assert!(n1 <= n);
    let mut bits = vec![false; n];
    let mut need = n1;
    for (i, bit) in bits.iter_mut().enumerate() {
        if need == 0 {
            break;
        }
        let avail = n - i;
        if rng.uniform() * (avail as f64) < need as f64 {
            *bit = true;
            need -= 1;
        }
    }
    bits.iter().filter(|&&b| b).count(); // no-op read; keeps invariant obvious in debug
    debug_assert_eq!(bits.iter().filter(|&&b| b).count(), n1);
    AssignmentVector { bits }
}

/// Iterator over all `C(n, n1)` assignments of `CR(n, n1)` in lexicographic
/// order of the treated index set.
pub struct CrEnumerator {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Iterator for CrEnumerator {
    type Item = AssignmentVector;

    fn next(&mut self) -> Option<AssignmentVector> {
        if self.done {
            return None;
        }
        let mut bits = vec![false; self.n];
        for &i in &self.idx {
            bits[i] = true;
        }
        // Advance to the next combination.
        let k = self.idx.len();
        if k == 0 {
            self.done = true;
        } else {
            let mut j = k;
            loop {
                if j == 0 {
                    self.done = true;
                    break;
                }
                j -= 1;
                if self.idx[j] < self.n - (k - j) {
                    self.idx[j] += 1;
                    for t in j + 1..k {
                        self.idx[t] = self.idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
        Some(AssignmentVector { bits })
    }
}

/// Enumerate all assignments of `CR(n, n1)`, refusing when the count exceeds
/// `budget`.
pub fn enumerate_cr(n: usize, n1: usize, budget: u128) -> Result<CrEnumerator> {
    assert!(n1 <= n);
    let count = choose_exact(n as u64, n1 as u64).unwrap_or(u128::MAX);
    if count > budget {
        return Err(Error::BudgetExceeded { required: count, budget });
    }
    Ok(CrEnumerator { n, idx: (0..n1).collect(), done: false })
}

/// PMF of the treated count inside a fixed subset of size `m`, under
/// `CR(n, n1)`: `P(K = k) = C(m, k) C(n-m, n1-k) / C(n, n1)` for
/// `k = 0..=m`. Computed in log space; entries outside the support are 0.
pub fn n_a1_pmf(n: usize, n1: usize, m: usize) -> Vec<f64> {
    assert!(m <= n && n1 <= n);
    let log_denom = ln_choose(n as u64, n1 as u64);
    (0..=m)
        .map(|k| {
            if k > n1 || n1 - k > n - m {
                0.0
            } else {
                (ln_choose(m as u64, k as u64) + ln_choose((n - m) as u64, (n1 - k) as u64)
                    - log_denom)
                    .exp()
            }
        })
        .collect()
}

/// Draw the pattern a `CR(n, n1)` assignment induces on a fixed subset of
/// size `m`: a hypergeometric treated count, then a uniform arrangement.
pub fn sample_induced(n: usize, n1: usize, m: usize, rng: &mut RngStream) -> InducedAssignment {
    let pmf = n_a1_pmf(n, n1, m);
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut k = 0usize;
    for (i, &p) in pmf.iter().enumerate() {
        acc += p;
        k = i;
        if u < acc {
            break;
        }
    }
    let inner = sample_cr(m, k, rng);
    InducedAssignment { bits: inner.bits }
}

/// Enumerate the induced distribution on a subset of size `m` exactly:
/// every pattern together with its probability. Patterns with zero
/// probability are skipped. Errors when the pattern count exceeds `budget`.
pub fn enumerate_induced(
    n: usize,
    n1: usize,
    m: usize,
    budget: u128,
) -> Result<Vec<(InducedAssignment, f64)>> {
    let pmf = n_a1_pmf(n, n1, m);
    let mut total: u128 = 0;
    for (k, &p) in pmf.iter().enumerate() {
        if p > 0.0 {
            total = total.saturating_add(choose_exact(m as u64, k as u64).unwrap_or(u128::MAX));
        }
    }
    if total > budget {
        return Err(Error::BudgetExceeded { required: total, budget });
    }
    let mut out = Vec::new();
    for (k, &p) in pmf.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let per = p / choose_exact(m as u64, k as u64).unwrap() as f64;
        for a in enumerate_cr(m, k, budget)? {
            out.push((InducedAssignment { bits: a.bits }, per));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn enumeration_counts_and_is_exhaustive() {
        let all: Vec<_> = enumerate_cr(6, 3, 1 << 20).unwrap().collect();
        assert_eq!(all.len(), 20);
        let mut seen = std::collections::HashSet::new();
        for a in &all {
            assert_eq!(a.n_treated(), 3);
            assert!(seen.insert(a.bits.clone()));
        }
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        assert!(matches!(
            enumerate_cr(40, 20, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn pmf_sums_to_one_and_matches_enumeration() {
        // Oracle: enumerate CR(7, 3) and tabulate the treated count within
        // the first 4 slots.
        let (n, n1, m) = (7usize, 3usize, 4usize);
        let pmf = n_a1_pmf(n, n1, m);
        assert_relative_eq!(pmf.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let all: Vec<_> = enumerate_cr(n, n1, 1 << 20).unwrap().collect();
        for k in 0..=m {
            let cnt = all
                .iter()
                .filter(|a| a.bits[..m].iter().filter(|&&b| b).count() == k)
                .count();
            assert_relative_eq!(pmf[k], cnt as f64 / all.len() as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn pmf_matches_statrs_hypergeometric() {
        use statrs::distribution::{Discrete, Hypergeometric};
        let (n, n1, m) = (30usize, 12usize, 9usize);
        let pmf = n_a1_pmf(n, n1, m);
        let h = Hypergeometric::new(n as u64, m as u64, n1 as u64).unwrap();
        for (k, &p) in pmf.iter().enumerate() {
            assert_relative_eq!(p, h.pmf(k as u64), epsilon = 1e-12);
        }
    }

    #[test]
    fn sample_cr_frequencies() {
        let mut rng = RngStream::new(42, 0);
        let (n, n1) = (5usize, 2usize);
        let reps = 50_000;
        let mut treated_counts = vec![0usize; n];
        for _ in 0..reps {
            let a = sample_cr(n, n1, &mut rng);
            assert_eq!(a.n_treated(), n1);
            for (i, &b) in a.bits.iter().enumerate() {
                if b {
                    treated_counts[i] += 1;
                }
            }
        }
        for &c in &treated_counts {
            let f = c as f64 / reps as f64;
            assert!((f - 0.4).abs() < 0.01, "marginal {f}");
        }
    }

    #[test]
    fn induced_sampling_matches_pmf() {
        let mut rng = RngStream::new(11, 3);
        let (n, n1, m) = (12usize, 5usize, 6usize);
        let pmf = n_a1_pmf(n, n1, m);
        let reps = 40_000;
        let mut counts = vec![0usize; m + 1];
        for _ in 0..reps {
            counts[sample_induced(n, n1, m, &mut rng).n_treated()] += 1;
        }
        for k in 0..=m {
            let f = counts[k] as f64 / reps as f64;
            assert!((f - pmf[k]).abs() < 0.012, "k={k}: {f} vs {}", pmf[k]);
        }
    }

    #[test]
    fn enumerate_induced_weights_sum_to_one() {
        let pats = enumerate_induced(9, 4, 5, 1 << 20).unwrap();
        let total: f64 = pats.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        // Each pattern appears once.
        let mut seen = std::collections::HashSet::new();
        for (p, _) in &pats {
            assert!(seen.insert(p.bits.clone()));
        }
    }
}
