use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, seeded, uniform_matrix, uniform_tensor};
use crate::tensor::{Matrix, Tensor, TensorizationScheme};

/// How the frozen factor matrices `A^(i)` are initialized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorInit {
    /// i.i.d. uniform on `[-a, a]`, `a = sqrt(6 / (R_i + I_i))`.
    #[default]
    Random,
    /// Rectangular identity `R_i × I_i`. The core stays random.
    Identity,
}

/// Frozen core and factor matrices of one tensorization signature.
#[derive(Debug)]
pub struct TeraFactors {
    /// `R_1 × … × R_N`.
    pub core: Tensor,
    /// `A^(i)`, each `R_i × I_i`.
    pub factors: Vec<Matrix>,
}

/// Frozen VeRA projections: `b_proj` is `J1 × r`, `a_proj` is `r × J2`.
#[derive(Debug)]
pub struct VeraFactors {
    pub b_proj: Matrix,
    pub a_proj: Matrix,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TeraKey {
    mode_sizes: Vec<usize>,
    ranks: Vec<usize>,
    init: FactorInit,
}

const TAG_CORE: u64 = 1;
const TAG_FACTOR: u64 = 2;
const TAG_VERA: u64 = 3;

/// Registry of shared frozen parameters.
///
/// Entries are materialized on first request, but each one is a pure function
/// of `master_seed` and its key: two stores with the same seed hand out
/// bit-identical factors, and every adapter with the same signature receives
/// the same `Arc`.
#[derive(Debug)]
pub struct FrozenFactorStore {
    master_seed: u64,
    tera: RwLock<HashMap<TeraKey, Arc<TeraFactors>>>,
    vera: RwLock<HashMap<(usize, usize, usize), Arc<VeraFactors>>>,
}

impl FrozenFactorStore {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            tera: RwLock::new(HashMap::new()),
            vera: RwLock::new(HashMap::new()),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn tera_factors(&self, scheme: &TensorizationScheme, init: FactorInit) -> Arc<TeraFactors> {
        let key = TeraKey {
            mode_sizes: scheme.mode_sizes().to_vec(),
            ranks: scheme.ranks().to_vec(),
            init,
        };
        if let Some(f) = self.tera.read().expect("store lock poisoned").get(&key) {
            return Arc::clone(f);
        }
        let mut map = self.tera.write().expect("store lock poisoned");
        Arc::clone(
            map.entry(key)
                .or_insert_with_key(|k| Arc::new(self.generate_tera(k))),
        )
    }

    pub fn vera_factors(&self, rows: usize, cols: usize, rank: usize) -> Arc<VeraFactors> {
        let key = (rows, cols, rank);
        if let Some(f) = self.vera.read().expect("store lock poisoned").get(&key) {
            return Arc::clone(f);
        }
        let mut map = self.vera.write().expect("store lock poisoned");
        Arc::clone(map.entry(key).or_insert_with(|| {
            let mut rng = seeded(derive_seed(
                self.master_seed,
                &[TAG_VERA, rows as u64, cols as u64, rank as u64],
            ));
            let b_proj = uniform_matrix(&mut rng, rows, rank, (6.0 / (rows + rank) as f64).sqrt());
            let a_proj = uniform_matrix(&mut rng, rank, cols, (6.0 / (rank + cols) as f64).sqrt());
            Arc::new(VeraFactors { b_proj, a_proj })
        }))
    }

    fn generate_tera(&self, key: &TeraKey) -> TeraFactors {
        let signature: Vec<u64> = key
            .mode_sizes
            .iter()
            .chain(&key.ranks)
            .map(|&v| v as u64)
            .collect();
        // The core seed ignores the factor init so that random and identity
        // variants of one signature share a core.
        let mut core_rng = seeded(derive_seed(
            self.master_seed,
            &[&[TAG_CORE], signature.as_slice()].concat(),
        ));
        let rank_sum: usize = key.ranks.iter().sum();
        let core = uniform_tensor(
            &mut core_rng,
            key.ranks.clone(),
            (6.0 / rank_sum as f64).sqrt(),
        );
        let factors = match key.init {
            FactorInit::Identity => key
                .ranks
                .iter()
                .zip(&key.mode_sizes)
                .map(|(&r, &i)| Matrix::eye(r, i))
                .collect(),
            FactorInit::Random => {
                let mut rng = seeded(derive_seed(
                    self.master_seed,
                    &[&[TAG_FACTOR], signature.as_slice()].concat(),
                ));
                key.ranks
                    .iter()
                    .zip(&key.mode_sizes)
                    .map(|(&r, &i)| uniform_matrix(&mut rng, r, i, (6.0 / (r + i) as f64).sqrt()))
                    .collect()
            }
        };
        TeraFactors { core, factors }
    }
}
