use thiserror::Error;

/// Errors surfaced by the inference routines.
///
/// All of these are user-facing conditions (bad input data or problem sizes
/// beyond configured limits), not internal bugs.
#[derive(Debug, Error)]
pub enum Error {
    /// The control arm contains no reporting units, so the always-reporter
    /// family is empty and no test can be run.
    #[error("no reporting units in the control arm; the compatible always-reporter family is empty")]
    EmptyControlReporters,

    /// A unit is inconsistent: it has a recorded outcome but is flagged as
    /// non-reporting, or vice versa.
    #[error("unit {index}: outcome presence does not match reporting flag")]
    InconsistentUnit { index: usize },

    /// Treatment shares are degenerate (no treated or no control units).
    #[error("degenerate design: n = {n}, n1 = {n1}")]
    DegenerateDesign { n: usize, n1: usize },

    /// The requested exact enumeration exceeds the configured budget.
    #[error("enumeration of {required} items exceeds budget of {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    /// The outcome support is too large for the count-vector reduction.
    #[error("outcome support has {found} distinct values, more than the configured maximum {max}")]
    SupportTooLarge { found: usize, max: usize },

    /// A numerical routine failed to converge to the requested accuracy.
    #[error("numerical routine failed to converge: {0}")]
    NoConvergence(String),

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
