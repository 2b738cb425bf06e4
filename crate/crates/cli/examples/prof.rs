//! Temporary profiling harness (not part of the deliverable).

use std::time::Instant;

use attrition_ri::sim::{simulate_dataset, OutcomeModel, SimulationConfig};
use attrition_ri_core::decision::Mode;
use attrition_ri_core::continuous::{
    heuristic_p, p_upper_bound, ContinuousConfig, DrawSet, SlotProblem,
};
use attrition_ri_core::pretest::{prune, PretestSide};
use attrition_ri_core::StatKind;

fn main() {
    let reps: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let cfg = SimulationConfig {
        n: 100,
        n1: 50,
        shares: [0.9, 0.05, 0.05],
        tau: 1.0,
        outcome: OutcomeModel::Normal,
        reps: 50,
        mode: Mode::Continuous,
        kind: StatKind::T2,
        alpha: 0.05,
        beta: 0.005,
        n_mc: 300,
        seed: 1008,
        side: None,
        rep_time_limit_s: None,
    };
    for &rep in &reps {
        let (data, _) = simulate_dataset(&cfg, rep);
        let ccfg = ContinuousConfig {
            seed: cfg.seed.wrapping_add(rep.wrapping_mul(0x9E37_79B9)),
            ..ContinuousConfig::default()
        };
        let level = cfg.alpha - cfg.beta;
        let problem = SlotProblem::from_dataset(&data).unwrap();
        let r0 = problem.r0();
        let pr = prune(problem.n, problem.n1, r0, problem.n_free(), cfg.beta, PretestSide::TwoSided);
        let ks: Vec<usize> = pr.admissible.iter().map(|&i| r0 + i).collect();
        eprintln!("rep {rep}: r0={r0} n_free={} ks={}..{}", problem.n_free(), ks[0], ks[ks.len() - 1]);
        let total = Instant::now();
        for &k in &ks {
            let t0 = Instant::now();
            let mut rng = attrition_ri_core::RngStream::new(ccfg.seed, 1 + k as u64);
            let draws = DrawSet::monte_carlo(problem.n, problem.n1, k, ccfg.n_mc, &mut rng);
            let h = heuristic_p(&problem, cfg.kind, k, &draws, ccfg.tol, ccfg.refine_budget);
            let t_heur = t0.elapsed().as_secs_f64();
            eprintln!("  k={k} heur done: p={:.4} l_k={:.3} ({t_heur:.2}s)", h.p, h.l_k);
            if h.p >= level {
                eprintln!("  k={k} heur_p={:.4} FAIL-TO-REJECT ({t_heur:.2}s)", h.p);
                break;
            }
            let t1 = Instant::now();
            let (ub, cert) = p_upper_bound(
                &problem, cfg.kind, k, &draws, h.l_k, level, ccfg.grid_step, ccfg.budget,
                ccfg.refine_budget, None,
            );
            let t_ub = t1.elapsed().as_secs_f64();
            if t_heur + t_ub > 1.0 || ub >= level {
                eprintln!(
                    "  k={k} heur_p={:.4} l_k={:.2} ub={ub:.4} cert={cert} heur={t_heur:.2}s ub_t={t_ub:.2}s",
                    h.p, h.l_k
                );
            }
            if ub >= level {
                eprintln!("  k={k} upper bound fails");
                break;
            }
        }
        eprintln!("rep {rep} total {:.1}s", total.elapsed().as_secs_f64());
    }
}
