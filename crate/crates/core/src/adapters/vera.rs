use std::sync::Arc;

use super::store::{FrozenFactorStore, VeraFactors};
use super::{check_dims, check_len, Adapter, Family};
use crate::error::{Result, TeraError};
use crate::tensor::Matrix;

/// Initial value of every entry of the trainable `d` vector.
pub const VERA_D_INIT: f64 = 0.1;

/// `ΔW = Λ_b · B · Λ_d · A` with frozen shared `B: J1 × r`, `A: r × J2`.
#[derive(Debug, Clone)]
pub struct VeraAdapter {
    frozen: Arc<VeraFactors>,
    b: Vec<f64>,
    d: Vec<f64>,
    master_seed: u64,
}

impl VeraAdapter {
    pub fn new(rows: usize, cols: usize, rank: usize, store: &FrozenFactorStore) -> Result<Self> {
        if rank == 0 {
            return Err(TeraError::InvalidArgument("VeRA rank must be >= 1".into()));
        }
        Ok(Self {
            frozen: store.vera_factors(rows, cols, rank),
            b: vec![0.0; rows],
            d: vec![VERA_D_INIT; rank],
            master_seed: store.master_seed(),
        })
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn frozen(&self) -> &Arc<VeraFactors> {
        &self.frozen
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// `B · Λ_d · A`.
    fn inner_product(&self) -> Matrix {
        let bd = Matrix::from_fn(self.frozen.b_proj.rows(), self.rank(), |i, s| {
            self.frozen.b_proj.get(i, s) * self.d[s]
        });
        bd.matmul(&self.frozen.a_proj).expect("VeRA factors chain")
    }
}

impl Adapter for VeraAdapter {
    fn family(&self) -> Family {
        Family::Vera
    }

    fn dims(&self) -> (usize, usize) {
        (self.frozen.b_proj.rows(), self.frozen.a_proj.cols())
    }

    fn trainable_param_count(&self) -> usize {
        self.b.len() + self.d.len()
    }

    fn params(&self) -> Vec<f64> {
        [self.b.as_slice(), self.d.as_slice()].concat()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.trainable_param_count(), params.len(), "VeRA parameters")?;
        let nb = self.b.len();
        self.b.copy_from_slice(&params[..nb]);
        self.d.copy_from_slice(&params[nb..]);
        Ok(())
    }

    fn materialize_delta(&self) -> Matrix {
        let m = self.inner_product();
        Matrix::from_fn(m.rows(), m.cols(), |i, j| self.b[i] * m.get(i, j))
    }

    fn apply_delta(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dims().1, x.len(), "apply_delta input")?;
        let ax: Vec<f64> = self
            .frozen
            .a_proj
            .matvec(x)?
            .iter()
            .zip(&self.d)
            .map(|(v, d)| v * d)
            .collect();
        Ok(self
            .frozen
            .b_proj
            .matvec(&ax)?
            .iter()
            .zip(&self.b)
            .map(|(v, b)| v * b)
            .collect())
    }

    fn gradient(&self, upstream: &Matrix) -> Result<Vec<f64>> {
        check_dims(self.dims(), upstream.dims(), "VeRA upstream gradient")?;
        let m = self.inner_product();
        let gb = (0..m.rows()).map(|i| {
            m.row(i)
                .iter()
                .zip(upstream.row(i))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        });
        // ∂/∂d_s = Σ_ij U_ij b_i B_is A_sj = (Bᵀ Λ_b U Aᵀ)_ss
        let bu = Matrix::from_fn(upstream.rows(), upstream.cols(), |i, j| {
            self.b[i] * upstream.get(i, j)
        });
        let proj = bu.matmul(&self.frozen.a_proj.transpose())?;
        let gd = (0..self.rank()).map(|s| {
            (0..proj.rows())
                .map(|i| self.frozen.b_proj.get(i, s) * proj.get(i, s))
                .sum::<f64>()
        });
        Ok(gb.chain(gd).collect())
    }

    fn rank_bound(&self) -> usize {
        let (r, c) = self.dims();
        self.rank().min(r).min(c)
    }
}
