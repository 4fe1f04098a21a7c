use super::{check_dims, check_len, Adapter, Family};
use crate::error::{Result, TeraError};
use crate::rng::{seeded, uniform_matrix};
use crate::tensor::Matrix;

/// `ΔW = A · B` with `A: J1 × r` random and `B: r × J2` zero at init.
#[derive(Debug, Clone)]
pub struct LoraAdapter {
    a: Matrix,
    b: Matrix,
}

impl LoraAdapter {
    pub fn new(rows: usize, cols: usize, rank: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let bound = (6.0 / (rows + rank) as f64).sqrt();
        Self {
            a: uniform_matrix(&mut rng, rows, rank, bound),
            b: Matrix::zeros(rank, cols),
        }
    }

    pub fn from_parts(a: Matrix, b: Matrix) -> Result<Self> {
        if a.cols() != b.rows() {
            return Err(TeraError::Shape(format!(
                "LoRA factors {}x{} and {}x{} do not chain",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }
}

impl Adapter for LoraAdapter {
    fn family(&self) -> Family {
        Family::Lora
    }

    fn dims(&self) -> (usize, usize) {
        (self.a.rows(), self.b.cols())
    }

    fn trainable_param_count(&self) -> usize {
        self.a.data().len() + self.b.data().len()
    }

    fn params(&self) -> Vec<f64> {
        [self.a.data(), self.b.data()].concat()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.trainable_param_count(), params.len(), "LoRA parameters")?;
        let na = self.a.data().len();
        self.a.data_mut().copy_from_slice(&params[..na]);
        self.b.data_mut().copy_from_slice(&params[na..]);
        Ok(())
    }

    fn materialize_delta(&self) -> Matrix {
        self.a.matmul(&self.b).expect("LoRA factors chain")
    }

    fn apply_delta(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.b.cols(), x.len(), "apply_delta input")?;
        self.a.matvec(&self.b.matvec(x)?)
    }

    fn gradient(&self, upstream: &Matrix) -> Result<Vec<f64>> {
        check_dims(self.dims(), upstream.dims(), "LoRA upstream gradient")?;
        let ga = upstream.matmul(&self.b.transpose())?;
        let gb = self.a.transpose().matmul(upstream)?;
        Ok([ga.data(), gb.data()].concat())
    }

    fn rank_bound(&self) -> usize {
        self.rank().min(self.a.rows()).min(self.b.cols())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_count_and_zero_init() {
        let a = LoraAdapter::new(5, 7, 1, 0);
        assert_eq!(a.trainable_param_count(), 12);
        assert!(a.materialize_delta().data().iter().all(|&v| v == 0.0));
        assert_eq!(a.rank_bound(), 1);
    }

    #[test]
    fn gradient_of_hand_case() {
        // ΔW = a bᵀ with a = [1, 2], b = [3]; U = [[1], [1]]: ∂/∂a = U bᵀ, ∂/∂b = aᵀ U.
        let l = LoraAdapter::from_parts(
            Matrix::new(2, 1, vec![1.0, 2.0]).unwrap(),
            Matrix::new(1, 1, vec![3.0]).unwrap(),
        )
        .unwrap();
        let g = l.gradient(&Matrix::new(2, 1, vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(g, vec![3.0, 3.0, 3.0]);
    }
}
