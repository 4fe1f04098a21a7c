//! JSON checkpoints. Only trainable state is stored by value; frozen factors
//! are referenced by `(master_seed, scheme)` and regenerated on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::{FactorInit, FrozenFactorStore};
use super::{
    check_dims, Adapter, AnyAdapter, Family, HiraAdapter, LoraAdapter, TeraAdapter, TeraOptions,
    VeraAdapter,
};
use crate::error::{Result, TeraError};
use crate::tensor::{Matrix, TensorizationScheme};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub adapter_type: Family,
    /// `[J1, J2]`.
    pub shape: [usize; 2],
    /// TeRA only.
    pub scheme: Option<TensorizationScheme>,
    /// LoRA / VeRA / HiRA rank.
    pub rank: Option<usize>,
    /// Seed of the store holding the frozen factors (TeRA, VeRA).
    pub master_seed: Option<u64>,
    /// TeRA only; zero-based mode index.
    pub zero_init_mode: Option<usize>,
    /// Trainable state. TeRA: `d^(1..N)`; VeRA: `[b, d]`; LoRA/HiRA: `[A, B]` row-major.
    pub d_vectors: Vec<Vec<f64>>,
    /// HiRA only: the frozen base weight the update is masked with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_weight: Option<Vec<Vec<f64>>>,
}

impl Checkpoint {
    pub fn from_adapter(adapter: &AnyAdapter) -> Self {
        let (j1, j2) = adapter.dims();
        let mut ck = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            adapter_type: adapter.family(),
            shape: [j1, j2],
            scheme: None,
            rank: None,
            master_seed: None,
            zero_init_mode: None,
            d_vectors: Vec::new(),
            base_weight: None,
        };
        match adapter {
            AnyAdapter::Tera(a) => {
                ck.scheme = Some(a.scheme().clone());
                ck.master_seed = Some(a.master_seed());
                ck.zero_init_mode = Some(a.zero_init_mode());
                ck.d_vectors = a.d_vectors().to_vec();
            }
            AnyAdapter::Vera(a) => {
                ck.rank = Some(a.rank());
                ck.master_seed = Some(a.master_seed());
                ck.d_vectors = vec![a.b().to_vec(), a.d().to_vec()];
            }
            AnyAdapter::Lora(a) => {
                ck.rank = Some(a.rank());
                ck.d_vectors = vec![a.a().data().to_vec(), a.b().data().to_vec()];
            }
            AnyAdapter::Hira(a) => {
                ck.rank = Some(a.rank());
                let p = a.params();
                let na = j1 * a.rank();
                ck.d_vectors = vec![p[..na].to_vec(), p[na..].to_vec()];
                ck.base_weight = Some(a.base().to_rows());
            }
        }
        ck
    }

    /// Number of stored trainable floats.
    pub fn trainable_len(&self) -> usize {
        self.d_vectors.iter().map(Vec::len).sum()
    }

    /// Store seed this checkpoint references, if its adapter has frozen shared factors.
    pub fn required_seed(&self) -> Option<u64> {
        self.master_seed
    }

    pub fn restore(&self, store: &FrozenFactorStore) -> Result<AnyAdapter> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(TeraError::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if let Some(seed) = self.master_seed {
            if seed != store.master_seed() {
                return Err(TeraError::Checkpoint(format!(
                    "checkpoint references master_seed {seed} but the store was built from {}",
                    store.master_seed()
                )));
            }
        }
        let [j1, j2] = self.shape;
        let missing = |what: &str| TeraError::Checkpoint(format!("missing field '{what}'"));
        let mut adapter: AnyAdapter = match self.adapter_type {
            Family::Tera | Family::TeraIden => {
                let scheme = self.scheme.clone().ok_or_else(|| missing("scheme"))?;
                self.master_seed.ok_or_else(|| missing("master_seed"))?;
                let opts = TeraOptions {
                    zero_init_mode: Some(self.zero_init_mode.ok_or_else(|| missing("zero_init_mode"))?),
                    factor_init: if self.adapter_type == Family::TeraIden {
                        FactorInit::Identity
                    } else {
                        FactorInit::Random
                    },
                };
                TeraAdapter::with_options(j1, j2, scheme, store, opts)?.into()
            }
            Family::Vera => {
                self.master_seed.ok_or_else(|| missing("master_seed"))?;
                let rank = self.rank.ok_or_else(|| missing("rank"))?;
                VeraAdapter::new(j1, j2, rank, store)?.into()
            }
            Family::Lora => {
                let rank = self.rank.ok_or_else(|| missing("rank"))?;
                LoraAdapter::from_parts(Matrix::zeros(j1, rank), Matrix::zeros(rank, j2))?.into()
            }
            Family::Hira => {
                let rank = self.rank.ok_or_else(|| missing("rank"))?;
                let base = Matrix::from_rows(self.base_weight.as_ref().ok_or_else(|| missing("base_weight"))?)?;
                check_dims((j1, j2), base.dims(), "HiRA base weight")?;
                HiraAdapter::from_parts(Matrix::zeros(j1, rank), Matrix::zeros(rank, j2), base)?
                    .into()
            }
        };
        if let AnyAdapter::Tera(t) = &adapter {
            let lens: Vec<usize> = self.d_vectors.iter().map(Vec::len).collect();
            if lens != t.scheme().ranks() {
                return Err(TeraError::Checkpoint(format!(
                    "scaling vector lengths {lens:?} do not match ranks {:?}",
                    t.scheme().ranks()
                )));
            }
        }
        let flat = self.d_vectors.concat();
        if flat.len() != adapter.trainable_param_count() {
            return Err(TeraError::Checkpoint(format!(
                "checkpoint holds {} trainable values, adapter expects {}",
                flat.len(),
                adapter.trainable_param_count()
            )));
        }
        adapter.set_params(&flat)?;
        Ok(adapter)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| TeraError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

pub fn save_checkpoint(adapter: &AnyAdapter, path: &Path) -> Result<()> {
    Checkpoint::from_adapter(adapter).write(path)
}

pub fn load_checkpoint(path: &Path, store: &FrozenFactorStore) -> Result<AnyAdapter> {
    Checkpoint::read(path)?.restore(store)
}
