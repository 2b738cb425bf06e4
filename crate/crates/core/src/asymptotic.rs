//! Large-sample calibration.
//!
//! Conditionally on the treated member count, the squared studentized
//! contrast is asymptotically chi-square with one degree of freedom, and the
//! membership penalty converges to a known shift. The test statistic's
//! large-sample law is therefore a hypergeometric mixture of shifted
//! chi-square distributions. This module evaluates that mixture, inverts it
//! by bisection, and turns the per-cardinality observed-statistic bounds
//! from the continuous machinery into an asymptotic accept/reject decision.

use crate::continuous::{stat_max_refine, stat_min_bisect, SlotProblem};
use crate::decision::{Decision, Mode, PerK};
use crate::error::{Error, Result};
use crate::model::{build_family, Dataset};
use crate::pretest::{prune, PretestSide};
use crate::randomization::n_a1_pmf;
use crate::stats::{g, StatKind};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

/// CDF of the chi-square distribution with one degree of freedom:
/// `P(Z^2 <= t) = erf(sqrt(t / 2))`. Absolute error below 1e-12.
pub fn chi2_cdf1(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        erf((t / 2.0).sqrt())
    }
}

/// Standard normal quantile function (used for inverse-CDF sampling).
pub fn normal_inverse_cdf(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// A mixture of shifted one-degree chi-squares: component `i` has weight
/// `weights[i]` and CDF `t -> chi2_cdf1(t - shifts[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub shifts: Vec<f64>,
}

impl MixtureSpec {
    /// The large-sample mixture for tables of cardinality `n_a`: weights
    /// from the hypergeometric law of the treated member count, shifts from
    /// the membership penalty at each count.
    pub fn for_cardinality(kind: StatKind, n: usize, n1: usize, n_a: usize) -> MixtureSpec {
        let pmf = n_a1_pmf(n, n1, n_a);
        let mut weights = Vec::new();
        let mut shifts = Vec::new();
        for (k, &w) in pmf.iter().enumerate() {
            if w > 0.0 {
                weights.push(w);
                shifts.push(g(kind, k, n, n1, n_a));
            }
        }
        MixtureSpec { weights, shifts }
    }

    /// Mixture CDF at `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.shifts)
            .map(|(&w, &s)| w * chi2_cdf1(t - s))
            .sum()
    }
}

/// Quantile of the mixture at `level`, by bisection to within 1e-10 in CDF
/// value. The mixture CDF is continuous and strictly increasing past the
/// smallest shift, so the quantile is unique.
pub fn mixture_quantile(spec: &MixtureSpec, level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::InvalidConfig(format!("quantile level {level} outside (0, 1)")));
    }
    let max_shift = spec.shifts.iter().cloned().fold(0.0f64, f64::max);
    if !max_shift.is_finite() {
        return Err(Error::NoConvergence("mixture has an infinite shift".into()));
    }
    // chi2_cdf1(t - s) >= level for every component once
    // t >= max_shift + chi2 quantile at `level`, so this upper end brackets.
    let mut hi = max_shift + chi2_quantile1(level) + 1.0;
    let mut lo = 0.0f64;
    debug_assert!(spec.cdf(hi) >= level);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = spec.cdf(mid);
        if (f - level).abs() <= 1e-10 {
            return Ok(mid);
        }
        if f < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + hi.abs()) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NoConvergence("mixture quantile bisection stalled".into()))
}

/// Quantile of the one-degree chi-square by bisection on [`chi2_cdf1`].
fn chi2_quantile1(level: f64) -> f64 {
    let mut hi = 1.0;
    while chi2_cdf1(hi) < level {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf1(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Which per-cardinality statistic summary drives the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsymptoticVariant {
    /// Compare the *minimum* observed statistic over tables of each
    /// cardinality: reject only when even the most favorable table exceeds
    /// the quantile. Weakly more conservative; the default.
    Min,
    /// Compare the *maximum* observed statistic over tables per cardinality.
    Max,
}

/// Tuning knobs for the asymptotic pipeline.
#[derive(Debug, Clone)]
pub struct AsymptoticConfig {
    pub variant: AsymptoticVariant,
    pub side: PretestSide,
    pub tol: f64,
    pub budget: u64,
    pub seed: u64,
}

impl Default for AsymptoticConfig {
    fn default() -> Self {
        AsymptoticConfig {
            variant: AsymptoticVariant::Min,
            side: PretestSide::TwoSided,
            tol: 1e-4,
            budget: 2_000_000,
            seed: 0,
        }
    }
}

/// Asymptotic worst-case decision.
///
/// For each admissible cardinality the observed statistic is summarized over
/// candidate tables (minimum or maximum, per `variant`), converted to the
/// mixture tail probability, and the test rejects only when every
/// cardinality's tail probability stays below `alpha - beta`.
pub fn asymptotic_decision(
    data: &Dataset,
    kind: StatKind,
    alpha: f64,
    beta: f64,
    cfg: &AsymptoticConfig,
) -> Result<Decision> {
    let start = std::time::Instant::now();
    let problem = SlotProblem::from_dataset(data)?;
    let level = alpha - beta;
    if level <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "alpha - beta must be positive (alpha={alpha}, beta={beta})"
        )));
    }
    let family = build_family(data)?;
    let (r0, n_free) = (family.r0(), family.n_free());
    let pr = prune(problem.n, problem.n1, r0, n_free, beta, cfg.side);
    let mut per_k = Vec::new();
    let mut worst = 0.0f64;
    for &i in &pr.admissible {
        let k = r0 + i;
        let t_summary = match cfg.variant {
            AsymptoticVariant::Min => stat_min_bisect(&problem, kind, k, cfg.tol, cfg.budget).0,
            AsymptoticVariant::Max => {
                let obs = problem.observed_pattern(k);
                stat_max_refine(&problem, kind, &obs, cfg.budget)
            }
        };
        let spec = MixtureSpec::for_cardinality(kind, problem.n, problem.n1, k);
        let p = if t_summary.is_finite() { (1.0 - spec.cdf(t_summary)).clamp(0.0, 1.0) } else { 0.0 };
        worst = worst.max(p);
        per_k.push(PerK { k, p_heuristic: Some(p), p_upper: Some(p), certified: true });
    }
    let reject = worst < level;
    Ok(Decision {
        mode: Mode::Asymptotic,
        kind,
        alpha,
        beta,
        reject,
        worst_p_lower: worst,
        worst_p_upper: worst,
        per_k,
        seed: cfg.seed,
        runtime_ms: start.elapsed().as_millis() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Quadrature oracle for the one-degree chi-square CDF: integrate the
    /// density with Simpson's rule on a fine grid.
    fn chi2_cdf1_quadrature(t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        // P(Z^2 <= t) = P(|Z| <= sqrt(t)) = 2 * int_0^sqrt(t) phi(u) du,
        // integrated with Simpson's rule.
        let b = t.sqrt();
        let phi = |u: f64| (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let steps = 20_000;
        let h = b / steps as f64;
        let mut acc = phi(0.0) + phi(b);
        for i in 1..steps {
            let u = i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(u);
        }
        2.0 * acc * h / 3.0
    }

    #[test]
    fn cdf_matches_quadrature_oracle() {
        for t in [0.1, 0.5, 1.32, 2.0, 3.8415, 6.6349, 10.0] {
            assert_relative_eq!(chi2_cdf1(t), chi2_cdf1_quadrature(t), epsilon = 1e-9);
        }
    }

    #[test]
    fn cdf_anchor_values() {
        // Median-ish anchor: the 75th percentile of a one-degree chi-square
        // is about 1.32.
        assert!((chi2_cdf1(1.32) - 0.75).abs() < 0.002);
        // 95th percentile anchor.
        assert!((chi2_cdf1(3.8415) - 0.95).abs() < 1e-4);
    }

    #[test]
    fn degenerate_mixture_is_plain_chi_square() {
        let spec = MixtureSpec { weights: vec![1.0], shifts: vec![0.0] };
        for level in [0.5, 0.9, 0.95, 0.99] {
            let q = mixture_quantile(&spec, level).unwrap();
            assert_relative_eq!(chi2_cdf1(q), level, epsilon = 1e-9);
        }
        let q95 = mixture_quantile(&spec, 0.95).unwrap();
        assert!((q95 - 3.8415).abs() < 1e-3);
    }

    #[test]
    fn positive_shifts_push_quantiles_up() {
        let base = MixtureSpec { weights: vec![1.0], shifts: vec![0.0] };
        let spec = MixtureSpec { weights: vec![0.5, 0.3, 0.2], shifts: vec![0.0, 1.0, 4.0] };
        for level in [0.5, 0.9, 0.95] {
            let q0 = mixture_quantile(&base, level).unwrap();
            let q = mixture_quantile(&spec, level).unwrap();
            assert!(q >= q0 - 1e-9, "level {level}: {q} < {q0}");
            assert_relative_eq!(spec.cdf(q), level, epsilon = 1e-9);
        }
    }

    #[test]
    fn monte_carlo_quantile_oracle() {
        // Simulate the mixture directly and compare empirical quantiles.
        use crate::rng::RngStream;
        let spec = MixtureSpec { weights: vec![0.6, 0.4], shifts: vec![0.3, 2.0] };
        let mut rng = RngStream::new(31, 0);
        let n = 400_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| {
                let u = rng.uniform();
                let shift = if u < 0.6 { spec.shifts[0] } else { spec.shifts[1] };
                let z = rng.standard_normal();
                z * z + shift
            })
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for level in [0.5, 0.9, 0.95] {
            let q = mixture_quantile(&spec, level).unwrap();
            let emp = draws[(level * n as f64) as usize];
            assert!((q - emp).abs() < 0.05, "level {level}: {q} vs {emp}");
        }
    }

    #[test]
    fn variant_min_is_weakly_more_conservative() {
        use crate::rng::RngStream;
        let mut rng = RngStream::new(77, 0);
        for _ in 0..10 {
            let n = 14;
            let n1 = 7;
            let d: Vec<bool> = (0..n).map(|i| i < n1).collect();
            let r: Vec<bool> = (0..n).map(|_| rng.uniform() > 0.3).collect();
            let y: Vec<Option<f64>> = (0..n)
                .map(|i| {
                    let v = rng.standard_normal() + if d[i] { 1.0 } else { 0.0 };
                    r[i].then_some(v)
                })
                .collect();
            let data = Dataset { y, d, r };
            if build_family(&data).is_err() {
                continue;
            }
            let mk = |variant| AsymptoticConfig { variant, ..AsymptoticConfig::default() };
            let dmin =
                asymptotic_decision(&data, StatKind::T2, 0.1, 0.0, &mk(AsymptoticVariant::Min))
                    .unwrap();
            let dmax =
                asymptotic_decision(&data, StatKind::T2, 0.1, 0.0, &mk(AsymptoticVariant::Max))
                    .unwrap();
            if dmin.reject {
                assert!(dmax.reject, "min rejected but max did not");
            }
        }
    }
}
