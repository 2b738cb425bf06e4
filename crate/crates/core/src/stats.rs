//! Test statistics over a candidate always-reporter table.
//!
//! All statistics combine a studentized within-member outcome contrast with
//! a penalty on the member-count imbalance between arms:
//!
//! - `T0`: the squared studentized contrast alone;
//! - `T1`: `T0` plus the squared standardized membership imbalance;
//! - `T2`: `T0` plus the squared *negative part* of the standardized
//!   imbalance, penalizing only tables that put too few members in the
//!   treated arm (the direction attrition can fake).
//!
//! Statistics are stored on the squared scale throughout: the square is a
//! strictly monotone transform of the absolute statistic, so rejection
//! regions and p-values are unchanged, and the squared form composes
//! directly with the chi-square machinery used for asymptotic calibration.
//!
//! Degenerate-variance conventions: a ratio `0/0` is `0`; a ratio `x/0`
//! with `x != 0` is `+inf` and sets the `degenerate` flag. Comparisons
//! between statistic values are exact on `f64` (no epsilon), so ties are
//! resolved identically everywhere.

use serde::{Deserialize, Serialize};

/// Which statistic to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    T0,
    T1,
    T2,
}

/// A statistic value plus a flag recording whether a degenerate variance
/// (`x/0`, `x != 0`) was encountered while forming it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatValue {
    pub value: f64,
    pub degenerate: bool,
}

impl StatValue {
    pub fn finite(value: f64) -> Self {
        StatValue { value, degenerate: false }
    }
}

/// Negative part: `max(0, -x)`.
#[inline]
pub fn floor_minus(x: f64) -> f64 {
    (-x).max(0.0)
}

/// Ratio with the degenerate conventions above. Returns `(value, degenerate)`.
#[inline]
fn guarded_ratio(num: f64, den: f64) -> (f64, bool) {
    if den > 0.0 {
        (num / den, false)
    } else if num == 0.0 {
        (0.0, false)
    } else {
        (f64::INFINITY, true)
    }
}

/// Difference in per-arm member shares:
/// `(1/n1) sum_i d_i a_i - (1/n0) sum_i (1-d_i) a_i`.
pub fn dim_ar(d: &[bool], a: &[bool], n1: usize, n0: usize) -> f64 {
    let mut t = 0usize;
    let mut c = 0usize;
    for (&di, &ai) in d.iter().zip(a) {
        if ai {
            if di {
                t += 1;
            } else {
                c += 1;
            }
        }
    }
    dim_from_counts(t, c, n1, n0)
}

/// Same contrast from the two member counts directly.
#[inline]
pub fn dim_from_counts(n_a1: usize, n_a0: usize, n1: usize, n0: usize) -> f64 {
    n_a1 as f64 / n1 as f64 - n_a0 as f64 / n0 as f64
}

/// Exact randomization variance of [`dim_ar`] over `CR(n, n1)` for a member
/// set of size `n_a`:
/// `n^2 / (n1 n0 (n-1)) * (n_a/n) (1 - n_a/n)`.
pub fn var_dim(n: usize, n1: usize, n_a: usize) -> f64 {
    assert!(n >= 2 && n1 >= 1 && n1 < n && n_a <= n);
    let (nf, n1f) = (n as f64, n1 as f64);
    let n0f = nf - n1f;
    let share = n_a as f64 / nf;
    nf * nf / (n1f * n0f * (nf - 1.0)) * (share - share * share)
}

/// Within-member difference in outcome means between arms. Arms with no
/// members contribute zero.
pub fn hajek(y: &[f64], d: &[bool], a: &[bool]) -> f64 {
    let (m1, m0) = arm_means(y, d, a);
    m1.unwrap_or(0.0) - m0.unwrap_or(0.0)
}

/// Mean and sum of squared deviations for one arm's member values. A
/// constant arm returns its value and an exact zero sum of squares, so
/// degenerate-variance detection does not depend on summation rounding.
fn arm_summary(vals: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64, usize)> {
    let mut it = vals.clone();
    let first = it.next()?;
    let mut count = 1usize;
    let mut constant = true;
    let mut sum = first;
    for v in it {
        constant &= v == first;
        sum += v;
        count += 1;
    }
    if constant {
        return Some((first, 0.0, count));
    }
    let mean = sum / count as f64;
    let ss: f64 = vals.map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, ss, count))
}

fn arm_summaries(
    y: &[f64],
    d: &[bool],
    a: &[bool],
) -> (Option<(f64, f64, usize)>, Option<(f64, f64, usize)>) {
    let arm = |want: bool| {
        arm_summary(
            (0..y.len()).filter(move |&i| a[i] && d[i] == want).map(move |i| y[i]),
        )
    };
    (arm(true), arm(false))
}

fn arm_means(y: &[f64], d: &[bool], a: &[bool]) -> (Option<f64>, Option<f64>) {
    let (t, c) = arm_summaries(y, d, a);
    (t.map(|(m, _, _)| m), c.map(|(m, _, _)| m))
}

/// Plug-in variance of [`hajek`]: per-arm sum of squared deviations divided
/// by the squared arm member count, summed over arms. Empty arms contribute
/// zero.
pub fn hajek_var(y: &[f64], d: &[bool], a: &[bool]) -> f64 {
    let (t, c) = arm_summaries(y, d, a);
    let part = |s: Option<(f64, f64, usize)>| {
        s.map_or(0.0, |(_, ss, cnt)| ss / (cnt as f64 * cnt as f64))
    };
    part(t) + part(c)
}

/// Imbalance penalty added to the studentized contrast, as a function of the
/// treated member count. Zero for `T0`; the squared standardized imbalance
/// for `T1`; its squared negative part for `T2`.
pub fn g(kind: StatKind, n_a1: usize, n: usize, n1: usize, n_a: usize) -> f64 {
    if kind == StatKind::T0 {
        return 0.0;
    }
    let n0 = n - n1;
    let dim = dim_from_counts(n_a1, n_a - n_a1, n1, n0);
    let v = var_dim(n, n1, n_a);
    let num = match kind {
        StatKind::T0 => unreachable!(),
        StatKind::T1 => dim * dim,
        StatKind::T2 => {
            let f = floor_minus(dim);
            f * f
        }
    };
    guarded_ratio(num, v).0
}

/// Compose the two studentized pieces under the degeneracy conventions.
fn compose(kind: StatKind, hajek: f64, hv: f64, dim: f64, v: f64) -> StatValue {
    let (t0, d0) = guarded_ratio(hajek * hajek, hv);
    let (pen, d1) = match kind {
        StatKind::T0 => (0.0, false),
        StatKind::T1 => guarded_ratio(dim * dim, v),
        StatKind::T2 => {
            let f = floor_minus(dim);
            guarded_ratio(f * f, v)
        }
    };
    StatValue { value: t0 + pen, degenerate: d0 || d1 }
}

/// Full-vector statistic: outcomes `y`, assignment `d`, member flags `a`.
///
/// `y[i]` is only read when `a[i]` is set, so entries of non-members may be
/// arbitrary (e.g. `0.0` placeholders for units that did not report).
pub fn stat(kind: StatKind, y: &[f64], d: &[bool], a: &[bool]) -> StatValue {
    let n = d.len();
    let n1 = d.iter().filter(|&&x| x).count();
    let n0 = n - n1;
    let n_a = a.iter().filter(|&&x| x).count();
    let h = hajek(y, d, a);
    let hv = hajek_var(y, d, a);
    let dim = dim_ar(d, a, n1, n0);
    let v = if n_a == 0 { 0.0 } else { var_dim(n, n1, n_a) };
    compose(kind, h, hv, dim, v)
}

/// Count-based statistic for discrete outcome supports.
///
/// `support[k]` is the k-th distinct outcome value, `counts[k]` the number
/// of members with that value, and `treated[k]` how many of those members
/// are treated. Equals [`stat`] on any full-vector representation with the
/// same counts.
pub fn stat_from_counts(
    kind: StatKind,
    support: &[f64],
    counts: &[u64],
    treated: &[u64],
    n: usize,
    n1: usize,
) -> StatValue {
    debug_assert_eq!(support.len(), counts.len());
    debug_assert_eq!(support.len(), treated.len());
    let n0 = n - n1;
    let n_a: u64 = counts.iter().sum();
    let n_a1: u64 = treated.iter().sum();
    let n_a0 = n_a - n_a1;
    for k in 0..support.len() {
        debug_assert!(treated[k] <= counts[k]);
    }
    // Mean and sum of squared deviations for an arm described by its class
    // counts. A single-class arm gets its value and an exact zero sum of
    // squares, matching the convention of the full-vector path.
    let arm = |cnt_of: &dyn Fn(usize) -> u64, total: u64| -> Option<(f64, f64)> {
        if total == 0 {
            return None;
        }
        let occupied: Vec<usize> = (0..support.len()).filter(|&k| cnt_of(k) > 0).collect();
        if occupied.len() == 1 {
            return Some((support[occupied[0]], 0.0));
        }
        let s: f64 = occupied.iter().map(|&k| cnt_of(k) as f64 * support[k]).sum();
        let m = s / total as f64;
        let ss: f64 = occupied
            .iter()
            .map(|&k| cnt_of(k) as f64 * (support[k] - m) * (support[k] - m))
            .sum();
        Some((m, ss))
    };
    let t_arm = arm(&|k| treated[k], n_a1);
    let c_arm = arm(&|k| counts[k] - treated[k], n_a0);
    let part = |a: Option<(f64, f64)>, total: u64| {
        a.map_or(0.0, |(_, ss)| ss / (total as f64 * total as f64))
    };
    let hv1 = part(t_arm, n_a1);
    let hv0 = part(c_arm, n_a0);
    let h = t_arm.map_or(0.0, |(m, _)| m) - c_arm.map_or(0.0, |(m, _)| m);
    let dim = dim_from_counts(n_a1 as usize, n_a0 as usize, n1, n0);
    let v = if n_a == 0 { 0.0 } else { var_dim(n, n1, n_a as usize) };
    compose(kind, h, hv1 + hv0, dim, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomization::n_a1_pmf;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn floor_minus_cases() {
        assert_eq!(floor_minus(2.5), 0.0);
        assert_eq!(floor_minus(0.0), 0.0);
        assert_eq!(floor_minus(-3.0), 3.0);
    }

    #[test]
    fn hand_computed_example() {
        // n = 6, n1 = 3. Members: units 0,1 treated with y = 2, 4;
        // units 3, 4 control with y = 1, 3.
        let y = vec![2.0, 4.0, 0.0, 1.0, 3.0, 0.0];
        let d = vec![true, true, true, false, false, false];
        let a = vec![true, true, false, true, true, false];
        // Means 3 and 2; hajek = 1. Deviations 1 each arm:
        // hv = (1+1)/4 + (1+1)/4 = 1. T0 = 1.
        assert_relative_eq!(hajek(&y, &d, &a), 1.0);
        assert_relative_eq!(hajek_var(&y, &d, &a), 1.0);
        let t0 = stat(StatKind::T0, &y, &d, &a);
        assert_relative_eq!(t0.value, 1.0);
        assert!(!t0.degenerate);
        // dim = 2/3 - 2/3 = 0, so T1 = T0 and T2 = T0.
        assert_relative_eq!(stat(StatKind::T1, &y, &d, &a).value, 1.0);
        assert_relative_eq!(stat(StatKind::T2, &y, &d, &a).value, 1.0);
        // var_dim with n_a = 4: 36/(3*3*5) * (4/6)(2/6) = 0.8 * 2/9.
        assert_relative_eq!(var_dim(6, 3, 4), 36.0 / 45.0 * (4.0 / 6.0) * (2.0 / 6.0));
    }

    #[test]
    fn degenerate_variance_flags() {
        // Constant outcomes within each arm: hv = 0 but hajek != 0.
        let y = vec![1.0, 1.0, 0.0, 0.0];
        let d = vec![true, true, false, false];
        let a = vec![true, true, true, true];
        let s = stat(StatKind::T0, &y, &d, &a);
        assert!(s.value.is_infinite());
        assert!(s.degenerate);
        // Constant and equal across arms: 0/0 -> 0, not degenerate.
        let y = vec![1.0, 1.0, 1.0, 1.0];
        let s = stat(StatKind::T0, &y, &d, &a);
        assert_eq!(s.value, 0.0);
        assert!(!s.degenerate);
    }

    #[test]
    fn empty_arm_contributes_zero() {
        // All members treated: control mean absent, hajek term uses 0.
        let y = vec![2.0, 4.0, 0.0, 0.0];
        let d = vec![true, true, false, false];
        let a = vec![true, true, false, false];
        assert_relative_eq!(hajek(&y, &d, &a), 3.0);
        // hv only from the treated arm: (1 + 1)/4 = 0.5.
        assert_relative_eq!(hajek_var(&y, &d, &a), 0.5);
    }

    #[test]
    fn empty_member_set_is_zero() {
        let y = vec![1.0, 2.0];
        let d = vec![true, false];
        let a = vec![false, false];
        for kind in [StatKind::T0, StatKind::T1, StatKind::T2] {
            let s = stat(kind, &y, &d, &a);
            assert_eq!(s.value, 0.0, "{kind:?}");
            assert!(!s.degenerate);
        }
    }

    #[test]
    fn penalty_mean_is_one_for_t1() {
        // The standardized imbalance has mean zero and variance var_dim
        // under the design, so the exact expectation of the T1 penalty is 1.
        for (n, n1, n_a) in [(10, 4, 5), (17, 8, 9), (30, 15, 1), (12, 6, 11)] {
            let pmf = n_a1_pmf(n, n1, n_a);
            let mean: f64 = pmf
                .iter()
                .enumerate()
                .map(|(k, &p)| p * g(StatKind::T1, k, n, n1, n_a))
                .sum();
            assert_relative_eq!(mean, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn two_paths_agree_on_counts() {
        // One discrete dataset evaluated both ways.
        let support = [0.0, 1.0, 2.0];
        let counts = [3u64, 2, 2];
        let treated = [1u64, 2, 1];
        let (n, n1) = (10usize, 5usize);
        // Vector version: members laid out explicitly, plus 3 non-members.
        let y = vec![0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 9.0, 9.0, 9.0];
        let d = vec![true, false, false, true, true, true, false, true, false, false];
        let a = vec![true, true, true, true, true, true, true, false, false, false];
        for kind in [StatKind::T0, StatKind::T1, StatKind::T2] {
            let sv = stat(kind, &y, &d, &a);
            let sc = stat_from_counts(kind, &support, &counts, &treated, n, n1);
            assert_relative_eq!(sv.value, sc.value, epsilon = 1e-12);
            assert_eq!(sv.degenerate, sc.degenerate);
        }
    }

    proptest! {
        #[test]
        fn t2_penalty_never_exceeds_t1(n_a in 1usize..12, n1 in 1usize..12, extra in 1usize..12, k in 0usize..12) {
            let n = n1 + extra;
            prop_assume!(n_a <= n && k <= n_a && k <= n1 && n_a - k <= n - n1);
            let g1 = g(StatKind::T1, k, n, n1, n_a);
            let g2 = g(StatKind::T2, k, n, n1, n_a);
            prop_assert!(g2 <= g1 + 1e-15);
            prop_assert!(g2 >= 0.0 && g1 >= 0.0);
        }

        #[test]
        fn stat_matches_counts_on_random_discrete_data(
            raw in proptest::collection::vec((0u8..3, any::<bool>(), any::<bool>()), 4..24),
        ) {
            let support = [0.0f64, 1.0, 2.0];
            let n = raw.len();
            let d: Vec<bool> = raw.iter().map(|t| t.1).collect();
            let n1 = d.iter().filter(|&&x| x).count();
            prop_assume!(n1 >= 1 && n1 < n);
            let a: Vec<bool> = raw.iter().map(|t| t.2).collect();
            let y: Vec<f64> = raw.iter().map(|t| support[t.0 as usize]).collect();
            let mut counts = [0u64; 3];
            let mut treated = [0u64; 3];
            for i in 0..n {
                if a[i] {
                    counts[raw[i].0 as usize] += 1;
                    if d[i] {
                        treated[raw[i].0 as usize] += 1;
                    }
                }
            }
            for kind in [StatKind::T0, StatKind::T1, StatKind::T2] {
                let sv = stat(kind, &y, &d, &a);
                let sc = stat_from_counts(kind, &support, &counts, &treated, n, n1);
                if sv.value.is_finite() {
                    prop_assert!((sv.value - sc.value).abs() <= 1e-11 * (1.0 + sv.value.abs()));
                } else {
                    prop_assert_eq!(sv.value, sc.value);
                }
                prop_assert_eq!(sv.degenerate, sc.degenerate);
            }
        }

        #[test]
        fn t2_stat_never_exceeds_t1_stat(
            raw in proptest::collection::vec((-5i8..5, any::<bool>(), any::<bool>()), 4..20),
        ) {
            let n = raw.len();
            let d: Vec<bool> = raw.iter().map(|t| t.1).collect();
            let n1 = d.iter().filter(|&&x| x).count();
            prop_assume!(n1 >= 1 && n1 < n);
            let a: Vec<bool> = raw.iter().map(|t| t.2).collect();
            let y: Vec<f64> = raw.iter().map(|t| t.0 as f64).collect();
            let s1 = stat(StatKind::T1, &y, &d, &a);
            let s2 = stat(StatKind::T2, &y, &d, &a);
            prop_assert!(s2.value <= s1.value + 1e-12 || (s1.value.is_infinite() && s2.value.is_infinite()));
        }
    }
}
