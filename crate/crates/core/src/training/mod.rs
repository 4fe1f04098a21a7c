//! Optimizing adapter parameters on desk-scale tasks.

pub mod als;
pub mod gradcheck;
pub mod mlp;
pub mod optim;
pub mod recovery;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterSpec, FactorInit, Family};
use crate::error::{Result, TeraError};
use crate::tensor::TensorizationScheme;

pub use als::{als_theorem3_lhs, AlsConfig, AlsReport};
pub use gradcheck::{finite_difference_check, DeltaLoss, FrobeniusLoss, GradCheckReport, FD_STEP};
pub use mlp::{fit_mlp_adapt, Mlp, MlpAdaptTask, MlpTaskConfig};
pub use optim::{Algorithm, Optimizer, OptimizerConfig};
pub use recovery::{fit_recovery, RecoveryTask, TargetGenerator};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Loss above `DIVERGENCE_FACTOR × initial loss` aborts a run.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceInfo {
    pub step: usize,
    pub loss: f64,
    pub initial_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub format_version: u32,
    pub family: Family,
    pub loss_curve: Vec<LossPoint>,
    pub final_loss: f64,
    /// `‖W* − ΔW‖_F / ‖W*‖_F` for recovery runs.
    pub final_relative_residual: Option<f64>,
    /// Target-task test accuracy for MLP runs.
    pub target_accuracy: Option<f64>,
    /// Accuracy of the frozen base on the same split.
    pub base_accuracy: Option<f64>,
    pub wall_time_secs: f64,
    pub trainable_params: usize,
    /// Numerical rank of each adapter's final update.
    pub final_ranks: Vec<usize>,
    pub rank_tolerance: f64,
    pub diverged: Option<DivergenceInfo>,
    pub config: OptimizerConfig,
}

impl TrainReport {
    /// `step,loss` rows; floats use the shortest round-trip representation.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for p in &self.loss_curve {
            let _ = writeln!(out, "{},{}", p.step, p.loss);
        }
        out
    }

    pub fn ensure_converged(&self) -> Result<()> {
        match self.diverged {
            Some(d) => Err(TeraError::Divergence {
                step: d.step,
                loss: d.loss,
            }),
            None => Ok(()),
        }
    }
}

pub(crate) fn diverged(loss: f64, initial: f64) -> bool {
    !loss.is_finite() || (initial > 0.0 && loss > DIVERGENCE_FACTOR * initial)
}

/// How to build an adapter of a given family for an arbitrary `J1 × J2` layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyConfig {
    /// One-sided tensorization: `J1` stays one mode, `J2` splits into `parts` equal modes.
    Tera {
        parts: usize,
        #[serde(default)]
        init: FactorInit,
    },
    /// Explicit scheme; the layer must match its matrix shape.
    TeraScheme {
        scheme: TensorizationScheme,
        #[serde(default)]
        init: FactorInit,
    },
    Lora {
        rank: usize,
    },
    Vera {
        rank: usize,
    },
    Hira {
        rank: usize,
    },
}

impl FamilyConfig {
    pub fn family(&self) -> Family {
        match self {
            FamilyConfig::Tera { init, .. } | FamilyConfig::TeraScheme { init, .. } => match init {
                FactorInit::Random => Family::Tera,
                FactorInit::Identity => Family::TeraIden,
            },
            FamilyConfig::Lora { .. } => Family::Lora,
            FamilyConfig::Vera { .. } => Family::Vera,
            FamilyConfig::Hira { .. } => Family::Hira,
        }
    }

    pub fn spec_for(&self, rows: usize, cols: usize) -> Result<AdapterSpec> {
        Ok(match self {
            FamilyConfig::Tera { parts, init } => AdapterSpec::Tera {
                scheme: TensorizationScheme::one_sided(rows, cols, *parts)?,
                init: *init,
            },
            FamilyConfig::TeraScheme { scheme, init } => {
                scheme.check_matrix(rows, cols)?;
                AdapterSpec::Tera {
                    scheme: scheme.clone(),
                    init: *init,
                }
            }
            FamilyConfig::Lora { rank } => AdapterSpec::Lora {
                rows,
                cols,
                rank: *rank,
            },
            FamilyConfig::Vera { rank } => AdapterSpec::Vera {
                rows,
                cols,
                rank: *rank,
            },
            FamilyConfig::Hira { rank } => AdapterSpec::Hira {
                rows,
                cols,
                rank: *rank,
            },
        })
    }
}

/// VeRA rank whose budget `J1 + r` matches `budget` exactly.
pub fn vera_rank_for_budget(rows: usize, budget: usize) -> Result<usize> {
    budget
        .checked_sub(rows)
        .filter(|&r| r >= 1)
        .ok_or_else(|| {
            TeraError::InvalidArgument(format!(
                "a VeRA adapter on {rows} rows needs at least {} parameters, budget is {budget}",
                rows + 1
            ))
        })
}

/// LoRA/HiRA rank whose budget `r (J1 + J2)` is closest to `budget` (at least 1).
pub fn lora_rank_for_budget(rows: usize, cols: usize, budget: usize) -> usize {
    let per = rows + cols;
    ((budget + per / 2) / per).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_matching() {
        assert_eq!(vera_rank_for_budget(64, 80).unwrap(), 16);
        assert!(vera_rank_for_budget(64, 64).is_err());
        assert_eq!(lora_rank_for_budget(64, 64, 80), 1);
        assert_eq!(lora_rank_for_budget(64, 64, 1024), 8);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = TrainReport {
            format_version: REPORT_FORMAT_VERSION,
            family: Family::Tera,
            loss_curve: vec![LossPoint { step: 0, loss: 0.5 }, LossPoint { step: 1, loss: 0.25 }],
            final_loss: 0.25,
            final_relative_residual: None,
            target_accuracy: None,
            base_accuracy: None,
            wall_time_secs: 0.0,
            trainable_params: 3,
            final_ranks: vec![],
            rank_tolerance: 1e-8,
            diverged: None,
            config: OptimizerConfig::default(),
        };
        assert_eq!(r.loss_csv(), "step,loss\n0,0.5\n1,0.25\n");
        assert!(r.ensure_converged().is_ok());
    }

    #[test]
    fn divergence_rule() {
        assert!(diverged(f64::NAN, 1.0));
        assert!(diverged(2e6, 1.0));
        assert!(!diverged(5e5, 1.0));
        assert!(!diverged(0.0, 0.0));
    }
}
