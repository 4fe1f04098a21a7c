use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adapters::{Adapter, AnyAdapter, Family};
use crate::error::{Result, TeraError};
use crate::linalg::{rank_from_singular_values, singular_values};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub layer: String,
    pub family: Family,
    pub rank: usize,
    /// Structural rank bound of the adapter.
    pub max_rank: usize,
    pub tolerance: f64,
    /// Singular values divided by the largest one (empty for a zero update).
    pub normalized_spectrum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub format_version: u32,
    pub rows: Vec<RankRow>,
}

impl RankReport {
    /// Columns `layer,family,rank,max_rank,tolerance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,family,rank,max_rank,tolerance\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:e}",
                r.layer, r.family, r.rank, r.max_rank, r.tolerance
            );
        }
        out
    }
}

pub fn rank_row(layer: &str, family: Family, delta: &Matrix, max_rank: usize, rel_tol: f64) -> Result<RankRow> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(TeraError::InvalidArgument(format!(
            "rank tolerance must lie in (0, 1), got {rel_tol}"
        )));
    }
    let sv = singular_values(delta)?;
    let top = sv.first().copied().unwrap_or(0.0);
    Ok(RankRow {
        layer: layer.to_string(),
        family,
        rank: rank_from_singular_values(&sv, rel_tol),
        max_rank: max_rank.min(delta.rows().min(delta.cols())),
        tolerance: rel_tol,
        normalized_spectrum: if top > 0.0 {
            sv.iter().map(|s| s / top).collect()
        } else {
            Vec::new()
        },
    })
}

/// One row per `(layer label, adapter)` pair, in input order.
pub fn rank_report(adapters: &[(String, &AnyAdapter)], rel_tol: f64) -> Result<RankReport> {
    let rows = adapters
        .iter()
        .map(|(layer, a)| rank_row(layer, a.family(), &a.materialize_delta(), a.rank_bound(), rel_tol))
        .collect::<Result<_>>()?;
    Ok(RankReport {
        format_version: super::THEOREM_REPORT_FORMAT_VERSION,
        rows,
    })
}
