//! Exact worst-case inference for outcomes on a small discrete support.
//!
//! When reported outcomes take only a few distinct values, two candidate
//! tables with the same per-value member counts have identical p-values:
//! the statistic depends on a table only through its counts, and complete
//! randomization is exchangeable across units. The `2^{n_free}` table family
//! therefore collapses to a small lattice of count vectors, and each
//! p-value is an exact sum over member/arm splits weighted by multivariate
//! hypergeometric mass.

use crate::comb::{choose_exact, ln_choose};
use crate::decision::{Decision, Mode, PerK};
use crate::error::{Error, Result};
use crate::model::{build_family, Dataset};
use crate::pretest::{prune, PretestSide};
use crate::randomization::n_a1_pmf;
use crate::rng::RngStream;
use crate::stats::{stat_from_counts, StatKind};

/// Distinct reported outcome values, ascending, with per-value reporter
/// counts by arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    /// Distinct outcome values among reporters, ascending.
    pub values: Vec<f64>,
    /// Control reporters per value (all of them are known members).
    pub ctrl: Vec<u64>,
    /// Treated reporters per value (each is a free membership choice).
    pub trt: Vec<u64>,
}

impl Support {
    /// Extract the support of a dataset's reported outcomes, refusing when
    /// there are more than `max_values` distinct values.
    pub fn from_dataset(data: &Dataset, max_values: usize) -> Result<Support> {
        let mut values: Vec<f64> = data
            .y
            .iter()
            .flatten()
            .copied()
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        if values.len() > max_values {
            return Err(Error::SupportTooLarge { found: values.len(), max: max_values });
        }
        let mut ctrl = vec![0u64; values.len()];
        let mut trt = vec![0u64; values.len()];
        for i in 0..data.n() {
            if let Some(y) = data.y[i] {
                let k = values.iter().position(|&v| v == y).unwrap();
                if data.d[i] {
                    trt[k] += 1;
                } else {
                    ctrl[k] += 1;
                }
            }
        }
        Ok(Support { values, ctrl, trt })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-value member counts of a candidate table.
pub type CountVector = Vec<u64>;

/// Per-value treated member counts under some assignment.
pub type TreatedSplit = Vec<u64>;

/// Enumerate all count vectors compatible with the observed data whose total
/// member count lies in `allowed_totals`, in lexicographic order.
///
/// Value `k` contributes between `ctrl[k]` (its known members) and
/// `ctrl[k] + trt[k]` (known plus every free candidate) members.
pub fn count_vectors(support: &Support, allowed_totals: &[usize]) -> Vec<CountVector> {
    let k = support.len();
    let mut out = Vec::new();
    let mut cur: CountVector = support.ctrl.clone();
    loop {
        let total: u64 = cur.iter().sum();
        if allowed_totals.contains(&(total as usize)) {
            out.push(cur.clone());
        }
        // Lexicographic successor within the per-value ranges.
        let mut pos = k;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if cur[pos] < support.ctrl[pos] + support.trt[pos] {
                cur[pos] += 1;
                for j in pos + 1..k {
                    cur[j] = support.ctrl[j];
                }
                break;
            }
        }
    }
}

/// Probability of a given member/arm split under `CR(n, n1)`:
/// `C(n - nA, n1 - nA1) * prod_k C(c_k, s_k) / C(n, n1)`.
pub fn split_pmf(n: usize, n1: usize, counts: &CountVector, split: &TreatedSplit) -> f64 {
    let n_a: u64 = counts.iter().sum();
    let n_a1: u64 = split.iter().sum();
    if n_a1 > n1 as u64 || (n as u64 - n_a) < (n1 as u64 - n_a1) {
        return 0.0;
    }
    let mut log_p = ln_choose(n as u64 - n_a, n1 as u64 - n_a1) - ln_choose(n as u64, n1 as u64);
    for (&c, &s) in counts.iter().zip(split) {
        if s > c {
            return 0.0;
        }
        log_p += ln_choose(c, s);
    }
    log_p.exp()
}

/// Exact p-value for the table described by `counts`, by summation over the
/// full split lattice. The observed split puts `counts[k] - ctrl[k]` treated
/// members at value `k`. Errors when the lattice exceeds `lattice_budget`.
pub fn exact_p_counts(
    kind: StatKind,
    support: &Support,
    counts: &CountVector,
    n: usize,
    n1: usize,
    lattice_budget: u128,
) -> Result<f64> {
    let lattice: u128 = counts.iter().map(|&c| c as u128 + 1).product();
    if lattice > lattice_budget {
        return Err(Error::BudgetExceeded { required: lattice, budget: lattice_budget });
    }
    let obs: TreatedSplit = counts.iter().zip(&support.ctrl).map(|(&c, &f)| c - f).collect();
    let t_obs = stat_from_counts(kind, &support.values, counts, &obs, n, n1).value;
    // Exact integer weights when the design count fits; each split's weight
    // is its number of generating assignments, so the p-value is the exact
    // rational hits/designs, matching direct enumeration bit for bit.
    let mut denom_exact = choose_exact(n as u64, n1 as u64);
    let mut num_exact: u128 = 0;
    let mut p = 0.0;
    let mut total_mass = 0.0;
    let mut split: TreatedSplit = vec![0; counts.len()];
    loop {
        let hit = {
            let mass = split_pmf(n, n1, counts, &split);
            if mass > 0.0 {
                total_mass += mass;
                let t = stat_from_counts(kind, &support.values, counts, &split, n, n1).value;
                if t >= t_obs {
                    p += mass;
                    true
                } else {
                    false
                }
            } else {
                false
            }
        };
        if hit && denom_exact.is_some() {
            match split_designs(n, n1, counts, &split) {
                Some(num) => num_exact += num,
                None => denom_exact = None,
            }
        }
        // Odometer over the split lattice.
        let mut pos = split.len();
        loop {
            if pos == 0 {
                debug_assert!((total_mass - 1.0).abs() < 1e-9, "split mass {total_mass}");
                if let Some(denom) = denom_exact {
                    return Ok(num_exact as f64 / denom as f64);
                }
                return Ok(p);
            }
            pos -= 1;
            if split[pos] < counts[pos] {
                split[pos] += 1;
                for j in pos + 1..counts.len() {
                    split[j] = 0;
                }
                break;
            }
        }
    }
}

/// Number of `CR(n, n1)` assignments inducing a given member/arm split:
/// `C(n - nA, n1 - nA1) * prod_k C(c_k, s_k)`. `None` on overflow.
fn split_designs(n: usize, n1: usize, counts: &CountVector, split: &TreatedSplit) -> Option<u128> {
    let n_a: u64 = counts.iter().sum();
    let n_a1: u64 = split.iter().sum();
    if n_a1 > n1 as u64 || (n as u64 - n_a) < (n1 as u64 - n_a1) {
        return Some(0);
    }
    let mut num = choose_exact(n as u64 - n_a, n1 as u64 - n_a1)?;
    for (&c, &s) in counts.iter().zip(split) {
        if s > c {
            return Some(0);
        }
        num = num.checked_mul(choose_exact(c, s)?)?;
    }
    Some(num)
}

/// Monte Carlo fallback for [`exact_p_counts`] when the split lattice is too
/// large: draws splits from the multivariate hypergeometric law.
pub fn mc_p_counts(
    kind: StatKind,
    support: &Support,
    counts: &CountVector,
    n: usize,
    n1: usize,
    n_mc: usize,
    rng: &mut RngStream,
) -> f64 {
    let obs: TreatedSplit = counts.iter().zip(&support.ctrl).map(|(&c, &f)| c - f).collect();
    let t_obs = stat_from_counts(kind, &support.values, counts, &obs, n, n1).value;
    let n_a: u64 = counts.iter().sum();
    let pmf = n_a1_pmf(n, n1, n_a as usize);
    let mut hits = 0usize;
    for _ in 0..n_mc {
        // Total treated member count, then a sequential hypergeometric
        // split across values.
        let n_a1 = sample_from_pmf(&pmf, rng) as u64;
        let mut split: TreatedSplit = vec![0; counts.len()];
        let mut remaining_draws = n_a1;
        let mut remaining_pop = n_a;
        for k in 0..counts.len() {
            if remaining_draws == 0 {
                break;
            }
            let tail = remaining_pop - counts[k];
            let cell_pmf = n_a1_pmf(remaining_pop as usize, remaining_draws as usize, counts[k] as usize);
            let s = sample_from_pmf(&cell_pmf, rng) as u64;
            split[k] = s;
            remaining_draws -= s;
            remaining_pop = tail;
        }
        let t = stat_from_counts(kind, &support.values, counts, &split, n, n1).value;
        if t >= t_obs {
            hits += 1;
        }
    }
    hits as f64 / n_mc as f64
}

fn sample_from_pmf(pmf: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in pmf.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Tuning knobs for the small-support pipeline.
#[derive(Debug, Clone)]
pub struct SmallSupportConfig {
    /// Maximum number of distinct outcome values.
    pub max_support: usize,
    /// Maximum split-lattice size for exact summation per count vector.
    pub lattice_budget: u128,
    /// Monte Carlo size when a lattice exceeds the budget.
    pub n_mc: usize,
    pub seed: u64,
    pub side: PretestSide,
}

impl Default for SmallSupportConfig {
    fn default() -> Self {
        SmallSupportConfig {
            max_support: 6,
            lattice_budget: 10_000_000,
            n_mc: 10_000,
            seed: 0,
            side: PretestSide::TwoSided,
        }
    }
}

/// Worst-case test over the full compatible family via the count-vector
/// reduction.
///
/// Rejects when the largest per-table p-value is at most `alpha - beta`
/// (the pretest, run at level `beta`, restricts which table cardinalities
/// are searched). Scans count vectors in lexicographic order and stops as
/// soon as a p-value exceeds `alpha - beta`, which cannot change the
/// decision — only the tightness of the reported upper bound.
pub fn worst_case_small_support(
    data: &Dataset,
    kind: StatKind,
    alpha: f64,
    beta: f64,
    cfg: &SmallSupportConfig,
) -> Result<Decision> {
    let start = std::time::Instant::now();
    let family = build_family(data)?;
    let support = Support::from_dataset(data, cfg.max_support)?;
    let (n, n1) = (data.n(), data.n1());
    let threshold = alpha - beta;
    let pr = prune(n, n1, family.r0(), family.n_free(), beta, cfg.side);
    let allowed: Vec<usize> = pr.admissible.iter().map(|&i| family.r0() + i).collect();
    let vectors = count_vectors(&support, &allowed);
    let mut rng = RngStream::new(cfg.seed, 0);
    let mut worst = 0.0f64;
    let mut exhaustive = true;
    let mut per_k_map: std::collections::BTreeMap<usize, (f64, bool)> = Default::default();
    for counts in &vectors {
        let lattice: u128 = counts.iter().map(|&c| c as u128 + 1).product();
        let (p, exact) = if lattice <= cfg.lattice_budget {
            (exact_p_counts(kind, &support, counts, n, n1, cfg.lattice_budget)?, true)
        } else {
            (mc_p_counts(kind, &support, counts, n, n1, cfg.n_mc, &mut rng), false)
        };
        worst = worst.max(p);
        let total: usize = counts.iter().sum::<u64>() as usize;
        let entry = per_k_map.entry(total).or_insert((0.0, true));
        entry.0 = entry.0.max(p);
        entry.1 &= exact;
        if p > threshold {
            exhaustive = false;
            break;
        }
    }
    let reject = exhaustive && worst <= threshold;
    let per_k = per_k_map
        .into_iter()
        .map(|(k, (p, exact))| PerK { k, p_heuristic: Some(p), p_upper: Some(p), certified: exact })
        .collect();
    Ok(Decision {
        mode: Mode::Exact,
        kind,
        alpha,
        beta,
        reject,
        worst_p_lower: worst,
        worst_p_upper: if exhaustive { worst } else { 1.0 },
        per_k,
        seed: cfg.seed,
        runtime_ms: start.elapsed().as_millis() as u64,
    })
}

/// Worst-case p-value and decision by brute force over tables and
/// assignments; exponential, for cross-checking only.
pub fn worst_case_brute_force(
    data: &Dataset,
    kind: StatKind,
    alpha: f64,
    beta: f64,
    side: PretestSide,
    budget: u128,
) -> Result<(f64, bool)> {
    use crate::randomization::enumerate_cr;
    use crate::stats::stat;
    let family = build_family(data)?;
    if family.n_free() > 30 {
        return Err(Error::BudgetExceeded {
            required: 1u128 << family.n_free(),
            budget,
        });
    }
    let (n, n1) = (data.n(), data.n1());
    let pr = prune(n, n1, family.r0(), family.n_free(), beta, side);
    let y: Vec<f64> = data.y.iter().map(|v| v.unwrap_or(0.0)).collect();
    let all: Vec<_> = enumerate_cr(n, n1, budget)?.collect();
    let mut worst = 0.0f64;
    for mask in 0..(1u64 << family.n_free()) {
        let extra = mask.count_ones() as usize;
        if !pr.admissible.contains(&extra) {
            continue;
        }
        let table = family.table_from_mask(mask);
        let t_obs = stat(kind, &y, &data.d, &table.member).value;
        let hits = all
            .iter()
            .filter(|assign| stat(kind, &y, &assign.bits, &table.member).value >= t_obs)
            .count();
        worst = worst.max(hits as f64 / all.len() as f64);
    }
    Ok((worst, worst <= alpha - beta))
}
