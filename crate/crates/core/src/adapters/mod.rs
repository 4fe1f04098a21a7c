//! Weight-update parameterizations.
//!
//! Every adapter maps a flat vector of trainable parameters to a `J1 × J2`
//! update `ΔW`. The [`Adapter`] trait exposes that map, its gradient, and
//! a factored matrix-vector product.

mod checkpoint;
mod hira;
mod lora;
mod store;
mod tera;
mod vera;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use hira::HiraAdapter;
pub use lora::LoraAdapter;
pub use store::{FactorInit, FrozenFactorStore, TeraFactors, VeraFactors};
pub use tera::{TeraAdapter, TeraOptions};
pub use vera::{VeraAdapter, VERA_D_INIT};

use crate::error::{Result, TeraError};
use crate::tensor::{Matrix, TensorizationScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tera,
    TeraIden,
    Lora,
    Vera,
    Hira,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Tera => "tera",
            Family::TeraIden => "tera_iden",
            Family::Lora => "lora",
            Family::Vera => "vera",
            Family::Hira => "hira",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = TeraError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tera" => Ok(Family::Tera),
            "tera_iden" | "tera-iden" => Ok(Family::TeraIden),
            "lora" => Ok(Family::Lora),
            "vera" => Ok(Family::Vera),
            "hira" => Ok(Family::Hira),
            other => Err(TeraError::InvalidArgument(format!(
                "unknown adapter family '{other}'"
            ))),
        }
    }
}

pub trait Adapter {
    fn family(&self) -> Family;

    /// `(J1, J2)` of the update matrix.
    fn dims(&self) -> (usize, usize);

    /// Number of parameters that receive gradients.
    fn trainable_param_count(&self) -> usize;

    /// Trainable parameters, flattened in a fixed per-family order.
    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    fn materialize_delta(&self) -> Matrix;

    /// `ΔW · x` without forming `ΔW` where the structure allows it.
    fn apply_delta(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Gradient of a scalar loss w.r.t. [`Adapter::params`], given `∂L/∂ΔW`.
    fn gradient(&self, upstream: &Matrix) -> Result<Vec<f64>>;

    /// Structural ceiling on `rank(ΔW)`.
    fn rank_bound(&self) -> usize;

    /// `W0 + ΔW`.
    fn merge(&self, w0: &Matrix) -> Result<Matrix> {
        check_dims(self.dims(), w0.dims(), "merge")?;
        w0.add(&self.materialize_delta())
    }
}

pub(crate) fn check_dims(expected: (usize, usize), got: (usize, usize), what: &str) -> Result<()> {
    if expected != got {
        return Err(TeraError::Shape(format!(
            "{what}: expected {}x{}, got {}x{}",
            expected.0, expected.1, got.0, got.1
        )));
    }
    Ok(())
}

pub(crate) fn check_len(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(TeraError::Shape(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

/// Any of the supported adapters.
#[derive(Debug, Clone)]
pub enum AnyAdapter {
    Tera(TeraAdapter),
    Lora(LoraAdapter),
    Vera(VeraAdapter),
    Hira(HiraAdapter),
}

macro_rules! dispatch {
    ($self:ident, $a:ident => $e:expr) => {
        match $self {
            AnyAdapter::Tera($a) => $e,
            AnyAdapter::Lora($a) => $e,
            AnyAdapter::Vera($a) => $e,
            AnyAdapter::Hira($a) => $e,
        }
    };
}

impl Adapter for AnyAdapter {
    fn family(&self) -> Family {
        dispatch!(self, a => a.family())
    }
    fn dims(&self) -> (usize, usize) {
        dispatch!(self, a => a.dims())
    }
    fn trainable_param_count(&self) -> usize {
        dispatch!(self, a => a.trainable_param_count())
    }
    fn params(&self) -> Vec<f64> {
        dispatch!(self, a => a.params())
    }
    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        dispatch!(self, a => a.set_params(params))
    }
    fn materialize_delta(&self) -> Matrix {
        dispatch!(self, a => a.materialize_delta())
    }
    fn apply_delta(&self, x: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, a => a.apply_delta(x))
    }
    fn gradient(&self, upstream: &Matrix) -> Result<Vec<f64>> {
        dispatch!(self, a => a.gradient(upstream))
    }
    fn rank_bound(&self) -> usize {
        dispatch!(self, a => a.rank_bound())
    }
    fn merge(&self, w0: &Matrix) -> Result<Matrix> {
        dispatch!(self, a => a.merge(w0))
    }
}

impl From<TeraAdapter> for AnyAdapter {
    fn from(a: TeraAdapter) -> Self {
        AnyAdapter::Tera(a)
    }
}
impl From<LoraAdapter> for AnyAdapter {
    fn from(a: LoraAdapter) -> Self {
        AnyAdapter::Lora(a)
    }
}
impl From<VeraAdapter> for AnyAdapter {
    fn from(a: VeraAdapter) -> Self {
        AnyAdapter::Vera(a)
    }
}
impl From<HiraAdapter> for AnyAdapter {
    fn from(a: HiraAdapter) -> Self {
        AnyAdapter::Hira(a)
    }
}

/// Adapter configuration, independent of any frozen state.
///
/// Parameter counts come straight from the configuration, so they are
/// available for shapes far too large to instantiate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AdapterSpec {
    Tera {
        scheme: TensorizationScheme,
        #[serde(default)]
        init: FactorInit,
    },
    Lora {
        rows: usize,
        cols: usize,
        rank: usize,
    },
    Vera {
        rows: usize,
        cols: usize,
        rank: usize,
    },
    Hira {
        rows: usize,
        cols: usize,
        rank: usize,
    },
}

impl AdapterSpec {
    pub fn family(&self) -> Family {
        match self {
            AdapterSpec::Tera {
                init: FactorInit::Identity,
                ..
            } => Family::TeraIden,
            AdapterSpec::Tera { .. } => Family::Tera,
            AdapterSpec::Lora { .. } => Family::Lora,
            AdapterSpec::Vera { .. } => Family::Vera,
            AdapterSpec::Hira { .. } => Family::Hira,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            AdapterSpec::Tera { scheme, .. } => scheme.matrix_dims(),
            AdapterSpec::Lora { rows, cols, .. }
            | AdapterSpec::Vera { rows, cols, .. }
            | AdapterSpec::Hira { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn trainable_param_count(&self) -> usize {
        match self {
            AdapterSpec::Tera { scheme, .. } => scheme.rank_sum(),
            AdapterSpec::Lora { rows, cols, rank } | AdapterSpec::Hira { rows, cols, rank } => {
                rank * (rows + cols)
            }
            AdapterSpec::Vera { rows, rank, .. } => rows + rank,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AdapterSpec::Tera { .. } => Ok(()),
            AdapterSpec::Lora { rows, cols, rank }
            | AdapterSpec::Vera { rows, cols, rank }
            | AdapterSpec::Hira { rows, cols, rank } => {
                if *rows == 0 || *cols == 0 {
                    return Err(TeraError::InvalidArgument("empty adapter shape".into()));
                }
                if *rank == 0 {
                    return Err(TeraError::InvalidArgument("rank must be >= 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Instantiates the adapter. `seed` drives trainable random inits
    /// (LoRA/HiRA); frozen parts come from `store`. HiRA needs `base`.
    pub fn build(
        &self,
        store: &FrozenFactorStore,
        seed: u64,
        base: Option<&Matrix>,
    ) -> Result<AnyAdapter> {
        self.validate()?;
        Ok(match self {
            AdapterSpec::Tera { scheme, init } => {
                let (j1, j2) = scheme.matrix_dims();
                let opts = TeraOptions {
                    factor_init: *init,
                    ..Default::default()
                };
                TeraAdapter::with_options(j1, j2, scheme.clone(), store, opts)?.into()
            }
            AdapterSpec::Lora { rows, cols, rank } => {
                LoraAdapter::new(*rows, *cols, *rank, seed).into()
            }
            AdapterSpec::Vera { rows, cols, rank } => {
                VeraAdapter::new(*rows, *cols, *rank, store)?.into()
            }
            AdapterSpec::Hira { rows, cols, rank } => {
                let base = base.ok_or_else(|| {
                    TeraError::InvalidArgument("HiRA needs a base weight matrix".into())
                })?;
                check_dims((*rows, *cols), base.dims(), "HiRA base weight")?;
                HiraAdapter::new(*rank, base.clone(), seed)?.into()
            }
        })
    }
}
