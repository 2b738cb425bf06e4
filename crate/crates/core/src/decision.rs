//! Shared result types serialized by every inference mode.

use crate::stats::StatKind;
use serde::{Deserialize, Serialize};

/// Which inference pipeline produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Continuous,
    Asymptotic,
}

/// Per-cardinality diagnostics from the worst-case search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerK {
    /// Table cardinality (total member count).
    pub k: usize,
    /// Heuristic (witness-based) p-value for this cardinality, if computed.
    pub p_heuristic: Option<f64>,
    /// Certified upper bound on the worst p-value at this cardinality, if
    /// computed.
    pub p_upper: Option<f64>,
    /// Whether `p_upper` was certified within budget. An uncertified bound
    /// is still valid but forces a fail-to-reject decision.
    pub certified: bool,
}

/// The outcome of one test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub mode: Mode,
    pub kind: StatKind,
    pub alpha: f64,
    pub beta: f64,
    /// Final decision: reject the null of no effect among always-reporters.
    pub reject: bool,
    /// Largest p-value actually exhibited by some candidate table
    /// (a lower bound on the worst-case p-value).
    pub worst_p_lower: f64,
    /// Certified upper bound on the worst-case p-value. Equal to
    /// `worst_p_lower` when the search was exhaustive; may be 1.0 when the
    /// search stopped early on a definite fail-to-reject.
    pub worst_p_upper: f64,
    /// Per-cardinality detail, ascending in `k`. Empty for modes that do not
    /// decompose by cardinality.
    pub per_k: Vec<PerK>,
    pub seed: u64,
    pub runtime_ms: u64,
}
