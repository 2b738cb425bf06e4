//! Simulation harness: a data-generating process with controlled attrition
//! and a study runner that measures rejection rates.
//!
//! Units fall into three reporting strata: always-reporters, units that
//! report only when treated, and never-reporters. Stratum sizes come from
//! the configured shares by largest-remainder rounding. Outcomes are drawn
//! by inverse-CDF transforms of counter-based uniform streams, so every
//! replication is a pure function of `(seed, rep)` and studies are
//! reproducible at any thread count.

use anyhow::{bail, Result};
use attrition_ri_core::asymptotic::{asymptotic_decision, AsymptoticConfig, AsymptoticVariant};
use attrition_ri_core::continuous::{worst_case_continuous, ContinuousConfig};
use attrition_ri_core::randomization::sample_cr;
use attrition_ri_core::small_support::{worst_case_small_support, SmallSupportConfig};
use attrition_ri_core::{Dataset, Decision, Mode, PretestSide, RngStream, StatKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// Reporting stratum of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Always,
    IfTreated,
    Never,
}

impl Stratum {
    fn reports(self, treated: bool) -> bool {
        match self {
            Stratum::Always => true,
            Stratum::IfTreated => treated,
            Stratum::Never => false,
        }
    }
}

/// Outcome model for the DGP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OutcomeModel {
    /// `y(0) ~ N(0, 1)`, `y(1) = y(0) + tau`.
    Normal,
    /// `y(0) = 1{u < p}`, `y(1) = 1{u < p + tau}` with a shared uniform, so
    /// `tau = 0` is the sharp null and `tau > 0` shifts the rate up.
    Binary { p: f64 },
}

/// Per-unit potential outcomes and reporting stratum.
#[derive(Debug, Clone)]
pub struct PotentialTable {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub stratum: Vec<Stratum>,
}

/// Full study configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    pub n1: usize,
    /// Shares of (always, if-treated, never) reporters; must sum to 1.
    pub shares: [f64; 3],
    /// Additive treatment effect.
    pub tau: f64,
    pub outcome: OutcomeModel,
    pub reps: usize,
    pub mode: Mode,
    pub kind: StatKind,
    pub alpha: f64,
    pub beta: f64,
    pub n_mc: usize,
    pub seed: u64,
    #[serde(default)]
    pub side: Option<PretestSide>,
    /// Per-replication wall-clock budget in seconds; a replication that
    /// exceeds it counts as fail-to-reject.
    #[serde(default)]
    pub rep_time_limit_s: Option<f64>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n1 >= self.n {
            bail!("need 0 < n1 < n (n={}, n1={})", self.n, self.n1);
        }
        let s: f64 = self.shares.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.shares.iter().any(|&x| x < 0.0) {
            bail!("shares must be nonnegative and sum to 1, got {:?}", self.shares);
        }
        if self.reps == 0 {
            bail!("reps must be positive");
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) || self.beta < 0.0 || self.beta >= self.alpha {
            bail!("need 0 < alpha < 1 and 0 <= beta < alpha");
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` units to the given shares.
pub fn apportion(n: usize, shares: &[f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = shares.iter().map(|&s| s * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|&x| x.floor() as usize).collect();
    let mut remainder: usize = n - counts.iter().sum::<usize>();
    // Assign leftovers by descending fractional part, ties by index.
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if remainder == 0 {
            break;
        }
        counts[i] += 1;
        remainder -= 1;
    }
    [counts[0], counts[1], counts[2]]
}

/// Generate one replication: potential outcomes, strata, assignment, and
/// the observed dataset.
pub fn simulate_dataset(cfg: &SimulationConfig, rep: u64) -> (Dataset, PotentialTable) {
    let [n_always, n_if, _n_never] = apportion(cfg.n, &cfg.shares);
    let stratum: Vec<Stratum> = (0..cfg.n)
        .map(|i| {
            if i < n_always {
                Stratum::Always
            } else if i < n_always + n_if {
                Stratum::IfTreated
            } else {
                Stratum::Never
            }
        })
        .collect();
    let mut outcome_rng = RngStream::new(cfg.seed, 2 * rep);
    let (mut y0, mut y1) = (Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n));
    for _ in 0..cfg.n {
        match cfg.outcome {
            OutcomeModel::Normal => {
                let base = attrition_ri_core::asymptotic::normal_inverse_cdf(
                    outcome_rng.uniform_open(),
                );
                y0.push(base);
                y1.push(base + cfg.tau);
            }
            OutcomeModel::Binary { p } => {
                let u = outcome_rng.uniform();
                y0.push(if u < p { 1.0 } else { 0.0 });
                y1.push(if u < p + cfg.tau { 1.0 } else { 0.0 });
            }
        }
    }
    let mut assign_rng = RngStream::new(cfg.seed, 2 * rep + 1);
    let assignment = sample_cr(cfg.n, cfg.n1, &mut assign_rng);
    let d = assignment.bits;
    let r: Vec<bool> = (0..cfg.n).map(|i| stratum[i].reports(d[i])).collect();
    let y: Vec<Option<f64>> = (0..cfg.n)
        .map(|i| r[i].then(|| if d[i] { y1[i] } else { y0[i] }))
        .collect();
    (Dataset { y, d, r }, PotentialTable { y0, y1, stratum })
}

/// Run the configured test once on a dataset.
pub fn run_test(
    data: &Dataset,
    mode: Mode,
    kind: StatKind,
    alpha: f64,
    beta: f64,
    n_mc: usize,
    seed: u64,
    side: PretestSide,
    variant: AsymptoticVariant,
    time_limit: Option<Duration>,
) -> attrition_ri_core::Result<Decision> {
    match mode {
        Mode::Exact => {
            let cfg = SmallSupportConfig { seed, side, ..SmallSupportConfig::default() };
            worst_case_small_support(data, kind, alpha, beta, &cfg)
        }
        Mode::Continuous => {
            let cfg = ContinuousConfig { n_mc, seed, side, time_limit, ..ContinuousConfig::default() };
            worst_case_continuous(data, kind, alpha, beta, &cfg)
        }
        Mode::Asymptotic => {
            let cfg = AsymptoticConfig { variant, side, seed, ..AsymptoticConfig::default() };
            asymptotic_decision(data, kind, alpha, beta, &cfg)
        }
    }
}

/// Runtime quantiles across replications, in milliseconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuntimeQuantiles {
    pub p50_ms: u64,
    pub p90_ms: u64,
    pub max_ms: u64,
}

/// Aggregate result of a simulation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub mode: Mode,
    pub kind: StatKind,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub reps: usize,
    pub rejection_rate: f64,
    /// Binomial standard error of the rejection rate.
    pub mc_se: f64,
    /// Replications that hit the per-replication time budget (counted as
    /// fail-to-reject).
    pub budget_exceeded: usize,
    /// Replications whose test errored (counted as fail-to-reject).
    pub errors: usize,
    pub seed: u64,
    pub runtime_quantiles: RuntimeQuantiles,
}

/// Run the full study. Replications run in parallel; results are reduced in
/// replication order and each replication has its own random streams, so
/// the report is independent of thread count.
pub fn run_study(cfg: &SimulationConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let side = cfg.side.unwrap_or_default();
    let limit = cfg.rep_time_limit_s.map(Duration::from_secs_f64);
    let outcomes: Vec<(bool, bool, bool, u64)> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let (data, _) = simulate_dataset(cfg, rep);
            let t0 = Instant::now();
            let res = run_test(
                &data,
                cfg.mode,
                cfg.kind,
                cfg.alpha,
                cfg.beta,
                cfg.n_mc,
                cfg.seed.wrapping_add(rep.wrapping_mul(0x9E37_79B9)),
                side,
                AsymptoticVariant::Min,
                limit,
            );
            let elapsed = t0.elapsed();
            let over = limit.map_or(false, |l| elapsed > l);
            match res {
                Ok(dec) => (dec.reject && !over, over, false, elapsed.as_millis() as u64),
                Err(_) => (false, over, true, elapsed.as_millis() as u64),
            }
        })
        .collect();
    let rejections = outcomes.iter().filter(|o| o.0).count();
    let budget_exceeded = outcomes.iter().filter(|o| o.1).count();
    let errors = outcomes.iter().filter(|o| o.2).count();
    let mut times: Vec<u64> = outcomes.iter().map(|o| o.3).collect();
    times.sort_unstable();
    let q = |p: f64| times[((p * (times.len() - 1) as f64).round() as usize).min(times.len() - 1)];
    let rate = rejections as f64 / cfg.reps as f64;
    Ok(StudyReport {
        mode: cfg.mode,
        kind: cfg.kind,
        alpha: cfg.alpha,
        beta: cfg.beta,
        tau: cfg.tau,
        reps: cfg.reps,
        rejection_rate: rate,
        mc_se: (rate * (1.0 - rate) / cfg.reps as f64).sqrt(),
        budget_exceeded,
        errors,
        seed: cfg.seed,
        runtime_quantiles: RuntimeQuantiles { p50_ms: q(0.5), p90_ms: q(0.9), max_ms: q(1.0) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg() -> SimulationConfig {
        SimulationConfig {
            n: 20,
            n1: 10,
            shares: [0.8, 0.1, 0.1],
            tau: 0.0,
            outcome: OutcomeModel::Binary { p: 0.5 },
            reps: 10,
            mode: Mode::Exact,
            kind: StatKind::T2,
            alpha: 0.1,
            beta: 0.0,
            n_mc: 200,
            seed: 7,
            side: None,
            rep_time_limit_s: None,
        }
    }

    #[test]
    fn apportionment_is_exact_and_stable() {
        assert_eq!(apportion(100, &[0.9, 0.05, 0.05]), [90, 5, 5]);
        assert_eq!(apportion(20, &[0.8, 0.1, 0.1]), [16, 2, 2]);
        assert_eq!(apportion(10, &[0.55, 0.25, 0.2]), [6, 2, 2]);
        let c = apportion(7, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(c.iter().sum::<usize>(), 7);
    }

    #[test]
    fn dataset_respects_strata_and_design() {
        let cfg = base_cfg();
        let (data, table) = simulate_dataset(&cfg, 3);
        assert_eq!(data.n(), 20);
        assert_eq!(data.n1(), 10);
        for i in 0..data.n() {
            assert_eq!(data.r[i], table.stratum[i].reports(data.d[i]));
            if let Some(y) = data.y[i] {
                let expect = if data.d[i] { table.y1[i] } else { table.y0[i] };
                assert_eq!(y, expect);
            }
        }
        // Sharp null: potential outcomes coincide at tau = 0.
        assert_eq!(table.y0, table.y1);
    }

    #[test]
    fn replications_are_reproducible() {
        let cfg = base_cfg();
        let (a, _) = simulate_dataset(&cfg, 5);
        let (b, _) = simulate_dataset(&cfg, 5);
        assert_eq!(a, b);
        let (c, _) = simulate_dataset(&cfg, 6);
        assert_ne!(a, c);
    }

    #[test]
    fn study_runs_and_reports() {
        let report = run_study(&base_cfg()).unwrap();
        assert_eq!(report.reps, 10);
        assert!(report.rejection_rate <= 1.0);
        assert_eq!(report.errors, 0);
    }
}
