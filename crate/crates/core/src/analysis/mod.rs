//! Rank analysis of adapter updates and per-instance numerical checks of
//! the rank, parameter-count and approximation bounds.

pub mod rank;
pub mod theorems;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use crate::linalg::{numerical_rank, RANK_REL_TOL};
pub use rank::{rank_report, rank_row, RankReport, RankRow};
pub use theorems::{
    enumerate_factorizations, random_theorem3_instance, summarize, verify_theorem1,
    verify_theorem2, verify_theorem3, Theorem3Summary, CORE_REJECT_TOL, FACTORIZATION_DIM_CAP,
    FACTORIZATION_LIMIT, THEOREM3_REL_TOL,
};

pub const THEOREM_REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    /// The check could neither confirm nor refute the bound.
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub shape: [usize; 2],
    pub scheme: Option<String>,
    pub seed: Option<u64>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub format_version: u32,
    pub theorem: u8,
    pub instance: InstanceDescriptor,
    /// Named quantities, sorted by name.
    pub measured: BTreeMap<String, f64>,
    pub verdict: Verdict,
    /// Bound minus measured value; negative only when the check failed.
    pub slack: f64,
    pub notes: Vec<String>,
}
