use super::{check_dims, check_len, Adapter, Family};
use crate::error::{Result, TeraError};
use crate::rng::{seeded, uniform_matrix};
use crate::tensor::Matrix;

/// `ΔW = (A · B) ⊙ W0`, with `W0` the frozen base weight.
#[derive(Debug, Clone)]
pub struct HiraAdapter {
    a: Matrix,
    b: Matrix,
    base: Matrix,
}

impl HiraAdapter {
    pub fn new(rank: usize, base: Matrix, seed: u64) -> Result<Self> {
        if rank == 0 {
            return Err(TeraError::InvalidArgument("HiRA rank must be >= 1".into()));
        }
        let (rows, cols) = base.dims();
        let mut rng = seeded(seed);
        let a = uniform_matrix(&mut rng, rows, rank, (6.0 / (rows + rank) as f64).sqrt());
        Ok(Self {
            a,
            b: Matrix::zeros(rank, cols),
            base,
        })
    }

    pub fn from_parts(a: Matrix, b: Matrix, base: Matrix) -> Result<Self> {
        if a.cols() != b.rows() {
            return Err(TeraError::Shape("HiRA factors do not chain".into()));
        }
        check_dims(base.dims(), (a.rows(), b.cols()), "HiRA base weight")?;
        Ok(Self { a, b, base })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }
}

impl Adapter for HiraAdapter {
    fn family(&self) -> Family {
        Family::Hira
    }

    fn dims(&self) -> (usize, usize) {
        self.base.dims()
    }

    fn trainable_param_count(&self) -> usize {
        self.a.data().len() + self.b.data().len()
    }

    fn params(&self) -> Vec<f64> {
        [self.a.data(), self.b.data()].concat()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.trainable_param_count(), params.len(), "HiRA parameters")?;
        let na = self.a.data().len();
        self.a.data_mut().copy_from_slice(&params[..na]);
        self.b.data_mut().copy_from_slice(&params[na..]);
        Ok(())
    }

    fn materialize_delta(&self) -> Matrix {
        self.a
            .matmul(&self.b)
            .and_then(|ab| ab.hadamard(&self.base))
            .expect("HiRA shapes agree")
    }

    fn apply_delta(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dims().1, x.len(), "apply_delta input")?;
        // ((AB) ⊙ W0) x = Σ_s diag(a_s) W0 diag(b_s) x
        let (rows, cols) = self.dims();
        let mut y = vec![0.0; rows];
        let mut scaled = vec![0.0; cols];
        for s in 0..self.rank() {
            for (j, v) in scaled.iter_mut().enumerate() {
                *v = self.b.get(s, j) * x[j];
            }
            let w = self.base.matvec(&scaled)?;
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += self.a.get(i, s) * w[i];
            }
        }
        Ok(y)
    }

    fn gradient(&self, upstream: &Matrix) -> Result<Vec<f64>> {
        check_dims(self.dims(), upstream.dims(), "HiRA upstream gradient")?;
        let masked = upstream.hadamard(&self.base)?;
        let ga = masked.matmul(&self.b.transpose())?;
        let gb = self.a.transpose().matmul(&masked)?;
        Ok([ga.data(), gb.data()].concat())
    }

    fn rank_bound(&self) -> usize {
        let (r, c) = self.dims();
        r.min(c)
    }

    fn merge(&self, w0: &Matrix) -> Result<Matrix> {
        check_dims(self.dims(), w0.dims(), "merge")?;
        w0.add(&self.materialize_delta())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;

    #[test]
    fn zero_init_and_count() {
        let base = gaussian_matrix(&mut seeded(1), 5, 3);
        let h = HiraAdapter::new(2, base, 0).unwrap();
        assert_eq!(h.trainable_param_count(), 16);
        assert!(h.materialize_delta().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_matches_materialized() {
        let mut rng = seeded(2);
        let a = gaussian_matrix(&mut rng, 4, 2);
        let b = gaussian_matrix(&mut rng, 2, 3);
        let base = gaussian_matrix(&mut rng, 4, 3);
        let h = HiraAdapter::from_parts(a, b, base).unwrap();
        let x = [0.3, -1.2, 0.7];
        let y = h.apply_delta(&x).unwrap();
        let y_ref = h.materialize_delta().matvec(&x).unwrap();
        for (p, q) in y.iter().zip(&y_ref) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
