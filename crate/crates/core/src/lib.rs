//! Randomization inference for the average treatment effect among
//! always-reporters in completely randomized experiments with attrition.
//!
//! Missing outcomes break the usual permutation argument: which units would
//! have reported under the other assignment is unknown, so the set of
//! "always-reporters" — the only subpopulation whose effect is identified
//! without missingness assumptions — is itself only partially observed.
//! This crate tests the sharp null of no effect among always-reporters by
//! controlling the *worst case* over every always-reporter configuration
//! compatible with the observed data.
//!
//! Three pipelines share the same decision contract:
//!
//! - [`small_support::worst_case_small_support`] — exact, for outcomes on a
//!   small discrete support, via a count-vector reduction of the table
//!   family;
//! - [`continuous::worst_case_continuous`] — certified bracketing of the
//!   worst-case p-value for continuous outcomes, via order-statistic bounds
//!   and branch-and-bound searches over member subsets;
//! - [`asymptotic::asymptotic_decision`] — large-sample calibration against
//!   a hypergeometric mixture of shifted chi-squares.
//!
//! All Monte Carlo is driven by counter-based [`rng::RngStream`]s, so every
//! result is bit-for-bit reproducible at any thread count.

pub mod asymptotic;
pub mod comb;
pub mod continuous;
pub mod decision;
pub mod error;
pub mod model;
pub mod pretest;
pub mod randomization;
pub mod rng;
pub mod small_support;
pub mod stats;

pub use decision::{Decision, Mode, PerK};
pub use error::{Error, Result};
pub use model::{build_family, classify_unit, table_cardinality_range, Dataset, ReportingTable, StratumLabel, TableFamily};
pub use pretest::{pretest_p, prune, PretestSide, PruneResult};
pub use rng::RngStream;
pub use stats::{StatKind, StatValue};
