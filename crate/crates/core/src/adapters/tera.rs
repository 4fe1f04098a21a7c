//! Tucker-form adapter with frozen random core/factors and trainable
//! diagonal scaling vectors:
//!
//! `ΔW(i_1..i_N) = Σ_r G(r) · Π_n d_n(r_n) · Π_n A_n(r_n, i_n)`
//!
//! unfolded at the scheme's split point.

use std::sync::Arc;

use super::store::{FactorInit, FrozenFactorStore, TeraFactors};
use super::{check_dims, check_len, Adapter, Family};
use crate::error::{Result, TeraError};
use crate::tensor::{
    fold_to_shape, kronecker_all, mode_n_product, unfold, Matrix, Tensor, TensorizationScheme,
};

#[derive(Debug, Clone, Copy, Default)]
pub struct TeraOptions {
    /// Mode whose scaling vector starts at zero; `None` means the last mode.
    pub zero_init_mode: Option<usize>,
    pub factor_init: FactorInit,
}

#[derive(Debug, Clone)]
pub struct TeraAdapter {
    scheme: TensorizationScheme,
    frozen: Arc<TeraFactors>,
    d: Vec<Vec<f64>>,
    zero_init_mode: usize,
    factor_init: FactorInit,
    master_seed: u64,
}

impl TeraAdapter {
    /// Zero-initialized adapter with random frozen factors, zero mode last.
    pub fn new(
        rows: usize,
        cols: usize,
        scheme: TensorizationScheme,
        store: &FrozenFactorStore,
    ) -> Result<Self> {
        Self::with_options(rows, cols, scheme, store, TeraOptions::default())
    }

    pub fn with_options(
        rows: usize,
        cols: usize,
        scheme: TensorizationScheme,
        store: &FrozenFactorStore,
        opts: TeraOptions,
    ) -> Result<Self> {
        scheme.check_matrix(rows, cols)?;
        let n = scheme.order();
        let zero_init_mode = opts.zero_init_mode.unwrap_or(n - 1);
        if zero_init_mode >= n {
            return Err(TeraError::InvalidArgument(format!(
                "zero_init_mode {zero_init_mode} out of range for {n} modes"
            )));
        }
        let d = scheme
            .ranks()
            .iter()
            .enumerate()
            .map(|(i, &r)| vec![if i == zero_init_mode { 0.0 } else { 1.0 }; r])
            .collect();
        let frozen = store.tera_factors(&scheme, opts.factor_init);
        Ok(Self {
            scheme,
            frozen,
            d,
            zero_init_mode,
            factor_init: opts.factor_init,
            master_seed: store.master_seed(),
        })
    }

    /// Same adapter state over caller-supplied frozen parts (not shared
    /// through any store).
    pub fn with_frozen(&self, frozen: TeraFactors) -> Result<Self> {
        if frozen.core.shape() != self.scheme.ranks() {
            return Err(TeraError::Shape(format!(
                "core shape {:?} does not match ranks {:?}",
                frozen.core.shape(),
                self.scheme.ranks()
            )));
        }
        check_len(self.scheme.order(), frozen.factors.len(), "factor count")?;
        for ((f, &r), &i) in frozen
            .factors
            .iter()
            .zip(self.scheme.ranks())
            .zip(self.scheme.mode_sizes())
        {
            check_dims((r, i), f.dims(), "factor matrix")?;
        }
        Ok(Self {
            frozen: Arc::new(frozen),
            ..self.clone()
        })
    }

    pub fn scheme(&self) -> &TensorizationScheme {
        &self.scheme
    }

    pub fn frozen(&self) -> &Arc<TeraFactors> {
        &self.frozen
    }

    pub fn core(&self) -> &Tensor {
        &self.frozen.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.frozen.factors
    }

    pub fn d_vectors(&self) -> &[Vec<f64>] {
        &self.d
    }

    pub fn zero_init_mode(&self) -> usize {
        self.zero_init_mode
    }

    pub fn factor_init(&self) -> FactorInit {
        self.factor_init
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn set_d_vectors(&mut self, d: Vec<Vec<f64>>) -> Result<()> {
        check_len(self.d.len(), d.len(), "number of scaling vectors")?;
        for (i, (v, &r)) in d.iter().zip(self.scheme.ranks()).enumerate() {
            check_len(r, v.len(), &format!("scaling vector {i}"))?;
        }
        self.d = d;
        Ok(())
    }

    pub fn set_d_vector(&mut self, mode: usize, v: Vec<f64>) -> Result<()> {
        let r = *self
            .scheme
            .ranks()
            .get(mode)
            .ok_or_else(|| TeraError::InvalidArgument(format!("mode {mode} out of range")))?;
        check_len(r, v.len(), "scaling vector")?;
        self.d[mode] = v;
        Ok(())
    }

    /// `Ĝ(r) = G(r) · Π_n d_n(r_n)`.
    pub fn scaled_core(&self) -> Tensor {
        let mut t = self.frozen.core.clone();
        for (n, d) in self.d.iter().enumerate() {
            t = mode_n_product(&t, &Matrix::diag(d), n).expect("core shape matches ranks");
        }
        t
    }

    /// `L = (⊗_{i≤k} A^(i))ᵀ`, shape `J1 × Π_{i≤k} R_i`.
    pub fn left_kron(&self) -> Matrix {
        kronecker_all(&self.frozen.factors[..self.scheme.split()])
            .expect("at least one row mode")
            .transpose()
    }

    /// `M = (⊗_{i>k} A^(i))ᵀ`, shape `J2 × Π_{i>k} R_i`.
    pub fn right_kron(&self) -> Matrix {
        kronecker_all(&self.frozen.factors[self.scheme.split()..])
            .expect("at least one column mode")
            .transpose()
    }

    /// Kronecker-form materialization `L · Ĝ_[N;k] · Mᵀ`.
    pub fn materialize_kronecker(&self) -> Matrix {
        let g = unfold(&self.scaled_core(), self.scheme.split()).expect("valid split");
        self.left_kron()
            .matmul(&g)
            .and_then(|lg| lg.matmul(&self.right_kron().transpose()))
            .expect("conforming Kronecker factors")
    }

    /// Mode-product contraction of `t` (shape `I_1..I_N`) with every `A^(n)`,
    /// producing a tensor of shape `R_1..R_N`.
    fn project(&self, t: &Tensor) -> Tensor {
        self.frozen
            .factors
            .iter()
            .enumerate()
            .fold(t.clone(), |acc, (n, a)| {
                mode_n_product(&acc, a, n).expect("factor matches mode size")
            })
    }

    /// `g_n(s) = Σ_{r : r_n = s} h(r) · Π_{m≠n} d_m(r_m)`.
    fn contract_all_but(&self, h: &Tensor, n: usize) -> Vec<f64> {
        let mut t = h.clone();
        for (m, d) in self.d.iter().enumerate() {
            if m != n {
                let row = Matrix::new(1, d.len(), d.clone()).expect("non-empty scaling vector");
                t = mode_n_product(&t, &row, m).expect("ranks match");
            }
        }
        t.into_data()
    }
}

impl Adapter for TeraAdapter {
    fn family(&self) -> Family {
        match self.factor_init {
            FactorInit::Random => Family::Tera,
            FactorInit::Identity => Family::TeraIden,
        }
    }

    fn dims(&self) -> (usize, usize) {
        self.scheme.matrix_dims()
    }

    fn trainable_param_count(&self) -> usize {
        self.scheme.rank_sum()
    }

    fn params(&self) -> Vec<f64> {
        self.d.concat()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.trainable_param_count(), params.len(), "TeRA parameters")?;
        let mut off = 0;
        for v in &mut self.d {
            let len = v.len();
            v.copy_from_slice(&params[off..off + len]);
            off += len;
        }
        Ok(())
    }

    fn materialize_delta(&self) -> Matrix {
        let mut t = self.frozen.core.clone();
        for (n, (a, d)) in self.frozen.factors.iter().zip(&self.d).enumerate() {
            // T(i, r) = d(r) · A(r, i): scale along r, then mix r into i.
            let scaled = Matrix::from_fn(a.cols(), a.rows(), |i, r| d[r] * a.get(r, i));
            t = mode_n_product(&t, &scaled, n).expect("factor matches core rank");
        }
        unfold(&t, self.scheme.split()).expect("valid split")
    }

    fn apply_delta(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (_, cols) = self.dims();
        check_len(cols, x.len(), "apply_delta input")?;
        let k = self.scheme.split();
        let modes = self.scheme.mode_sizes();
        let ranks = self.scheme.ranks();

        let mut v = Tensor::new(modes[k..].to_vec(), x.to_vec())?;
        for (m, a) in self.frozen.factors[k..].iter().enumerate() {
            v = mode_n_product(&v, a, m)?;
        }
        let g = unfold(&self.scaled_core(), k)?;
        let u = g.matvec(v.data())?;
        let mut y = Tensor::new(ranks[..k].to_vec(), u)?;
        for (m, a) in self.frozen.factors[..k].iter().enumerate() {
            y = mode_n_product(&y, &a.transpose(), m)?;
        }
        Ok(y.into_data())
    }

    fn gradient(&self, upstream: &Matrix) -> Result<Vec<f64>> {
        check_dims(self.dims(), upstream.dims(), "TeRA upstream gradient")?;
        let folded = fold_to_shape(upstream, self.scheme.mode_sizes(), self.scheme.split())?;
        let mut h = self.project(&folded);
        for (hv, gv) in h.data_mut().iter_mut().zip(self.frozen.core.data()) {
            *hv *= gv;
        }
        Ok((0..self.scheme.order())
            .flat_map(|n| self.contract_all_but(&h, n))
            .collect())
    }

    fn rank_bound(&self) -> usize {
        self.scheme.rank_bound()
    }
}
