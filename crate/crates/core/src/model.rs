//! Data model for a completely randomized experiment with attrition.
//!
//! Each unit has a treatment indicator `d`, a reporting indicator `r`, and
//! an outcome `y` observed exactly when `r = 1`. The quantity under test is
//! the average treatment effect among *always-reporters*: units that would
//! report their outcome under either treatment assignment. Always-reporter
//! status is only partially identified by the observed data, which induces a
//! finite family of candidate membership vectors that every test in this
//! crate ranges over.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One experiment's observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Observed outcome; `None` exactly when the unit did not report.
    pub y: Vec<Option<f64>>,
    /// Treatment indicator.
    pub d: Vec<bool>,
    /// Reporting indicator.
    pub r: Vec<bool>,
}

/// What the observed `(d, r)` pair reveals about a unit's always-reporter
/// status.
///
/// Under monotone attrition-free reporting of always-reporters:
/// - a control unit that reports must report under treatment too, so it is a
///   *known* always-reporter;
/// - any unit that fails to report is *known not* to be an always-reporter;
/// - a treated unit that reports may or may not have reported under control,
///   so its status is *ambiguous*.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StratumLabel {
    KnownAlwaysReporter,
    KnownNotAlwaysReporter,
    Ambiguous,
}

/// A candidate always-reporter membership vector, one flag per unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportingTable {
    pub member: Vec<bool>,
}

impl ReportingTable {
    /// Number of always-reporters in this table.
    pub fn cardinality(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }
}

/// The family of membership vectors compatible with the observed data,
/// stored in factored form: fixed labels plus the list of free indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableFamily {
    /// Per-unit label from [`classify_unit`].
    pub labels: Vec<StratumLabel>,
    /// Indices of ambiguous units (treated reporters), in unit order.
    pub free: Vec<usize>,
    /// Indices of known always-reporters (control reporters), in unit order.
    pub fixed_members: Vec<usize>,
}

impl TableFamily {
    /// Number of known always-reporters (control reporters).
    pub fn r0(&self) -> usize {
        self.fixed_members.len()
    }

    /// Number of ambiguous units (treated reporters).
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Number of tables in the family: `2^{n_free}`.
    pub fn size(&self) -> u128 {
        1u128 << self.n_free()
    }

    /// Materialize the table in which exactly the free units in `chosen`
    /// (a subset of `self.free`, by position) are members.
    pub fn table_from_mask(&self, mask: u64) -> ReportingTable {
        assert!(self.n_free() <= 64, "mask-based construction needs <= 64 free units");
        let mut member = vec![false; self.labels.len()];
        for &i in &self.fixed_members {
            member[i] = true;
        }
        for (j, &i) in self.free.iter().enumerate() {
            if mask >> j & 1 == 1 {
                member[i] = true;
            }
        }
        ReportingTable { member }
    }
}

impl Dataset {
    /// Total number of units.
    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// Number of treated units.
    pub fn n1(&self) -> usize {
        self.d.iter().filter(|&&d| d).count()
    }

    /// Number of control units.
    pub fn n0(&self) -> usize {
        self.n() - self.n1()
    }

    /// Check internal consistency: equal lengths, outcomes present exactly
    /// for reporters, and a non-degenerate design.
    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.d.len() || self.r.len() != self.d.len() {
            return Err(Error::InvalidConfig(format!(
                "column lengths differ: y={}, d={}, r={}",
                self.y.len(),
                self.d.len(),
                self.r.len()
            )));
        }
        for i in 0..self.n() {
            if self.y[i].is_some() != self.r[i] {
                return Err(Error::InconsistentUnit { index: i });
            }
        }
        let (n, n1) = (self.n(), self.n1());
        if n == 0 || n1 == 0 || n1 == n {
            return Err(Error::DegenerateDesign { n, n1 });
        }
        Ok(())
    }
}

/// Classify a unit from its observed `(d, r)` pair.
pub fn classify_unit(d: bool, r: bool) -> StratumLabel {
    match (d, r) {
        (false, true) => StratumLabel::KnownAlwaysReporter,
        (true, true) => StratumLabel::Ambiguous,
        (_, false) => StratumLabel::KnownNotAlwaysReporter,
    }
}

/// Build the compatible family for a dataset.
///
/// Fails with [`Error::EmptyControlReporters`] when no control unit reports:
/// every compatible table is then empty on the control side and no contrast
/// can be formed.
pub fn build_family(data: &Dataset) -> Result<TableFamily> {
    data.validate()?;
    let labels: Vec<StratumLabel> = data
        .d
        .iter()
        .zip(&data.r)
        .map(|(&d, &r)| classify_unit(d, r))
        .collect();
    let fixed_members: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == StratumLabel::KnownAlwaysReporter)
        .map(|(i, _)| i)
        .collect();
    let free: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == StratumLabel::Ambiguous)
        .map(|(i, _)| i)
        .collect();
    if fixed_members.is_empty() {
        return Err(Error::EmptyControlReporters);
    }
    Ok(TableFamily { labels, free, fixed_members })
}

/// Inclusive range of table cardinalities in the family:
/// `r0 ..= r0 + n_free`.
pub fn table_cardinality_range(family: &TableFamily) -> (usize, usize) {
    (family.r0(), family.r0() + family.n_free())
}
