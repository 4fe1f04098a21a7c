//! SVD-derived quantities: singular values, pseudoinverse, numerical rank.

use nalgebra::DMatrix;

use crate::error::{Result, TeraError};
use crate::tensor::Matrix;

/// Default relative cutoff for pseudoinverse truncation.
pub const PINV_REL_CUTOFF: f64 = 1e-12;

/// Default relative tolerance for numerical rank.
pub const RANK_REL_TOL: f64 = 1e-8;

const SVD_MAX_ITERS: usize = 10_000;

/// Thin SVD `m = U · diag(σ) · Vᵀ` with `σ` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn from_na_columns(m: &DMatrix<f64>, order: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), order.len(), |i, j| m[(i, order[j])])
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    let (rows, cols) = m.dims();
    if !m.is_finite() {
        return Err(TeraError::InvalidArgument(
            "SVD input contains non-finite entries".into(),
        ));
    }
    let decomp = nalgebra::linalg::SVD::try_new(to_na(m), true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or(TeraError::SvdNonConvergence { rows, cols })?;
    let (Some(u), Some(v_t)) = (decomp.u, decomp.v_t) else {
        return Err(TeraError::SvdNonConvergence { rows, cols });
    };
    let sv = decomp.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let v = v_t.transpose();
    Ok(Svd {
        u: from_na_columns(&u, &order),
        singular_values: order.iter().map(|&i| sv[i]).collect(),
        v: from_na_columns(&v, &order),
    })
}

pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let (rows, cols) = m.dims();
    let mut sv: Vec<f64> = nalgebra::linalg::SVD::try_new(to_na(m), false, false, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or(TeraError::SvdNonConvergence { rows, cols })?
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Moore–Penrose pseudoinverse, dropping `σ_i < rel_cutoff · σ_max`.
pub fn pseudoinverse(m: &Matrix, rel_cutoff: f64) -> Result<Matrix> {
    if !(rel_cutoff > 0.0) {
        return Err(TeraError::InvalidArgument(format!(
            "rel_cutoff must be positive, got {rel_cutoff}"
        )));
    }
    let Svd {
        u,
        singular_values,
        v,
    } = svd(m)?;
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let mut out = Matrix::zeros(m.cols(), m.rows());
    for (k, &s) in singular_values.iter().enumerate() {
        if s == 0.0 || s < rel_cutoff * smax {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..m.cols() {
            let vik = v.get(i, k) * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..m.rows() {
                let cur = out.get(i, j);
                out.set(i, j, cur + vik * u.get(j, k));
            }
        }
    }
    Ok(out)
}

/// Number of singular values strictly above `rel_tol · σ_max`; 0 for a zero matrix.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(TeraError::InvalidArgument(format!(
            "rel_tol must lie in (0, 1), got {rel_tol}"
        )));
    }
    Ok(rank_from_singular_values(&singular_values(m)?, rel_tol))
}

pub fn rank_from_singular_values(sv: &[f64], rel_tol: f64) -> usize {
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Solves the square system `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(TeraError::Shape("solve needs a square system".into()));
    }
    let lu = to_na(a).lu();
    let x = lu
        .solve(&nalgebra::DVector::from_column_slice(b))
        .ok_or_else(|| TeraError::InvalidArgument("singular system".into()))?;
    Ok(x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn gram_is_identity(m: &Matrix, tol: f64) -> bool {
        let g = m.transpose().matmul(m).unwrap();
        g.sub(&Matrix::identity(g.rows())).unwrap().max_abs() < tol
    }

    #[test]
    fn svd_of_diagonal() {
        let s = svd(&Matrix::diag(&[1.0, 3.0])).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_rank_one_outer_product() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, 0.7, -1.1];
        let m = Matrix::from_fn(4, 3, |i, j| u[i] * v[j]);
        let sv = singular_values(&m).unwrap();
        assert_eq!(sv.iter().filter(|&&s| s > 1e-12 * sv[0]).count(), 1);
    }

    #[test]
    fn svd_random_orthonormal_and_reconstructs() {
        let m = random(5, 3, 7);
        let s = svd(&m).unwrap();
        assert!(gram_is_identity(&s.u, 1e-10));
        assert!(gram_is_identity(&s.v, 1e-10));
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let rec = s
            .u
            .matmul(&Matrix::diag(&s.singular_values))
            .unwrap()
            .matmul(&s.v.transpose())
            .unwrap();
        assert!(rec.sub(&m).unwrap().frobenius_norm() <= 1e-10 * m.frobenius_norm());
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = Matrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(svd(&m).is_err());
    }

    #[test]
    fn pinv_identity_and_diag() {
        let p = pseudoinverse(&Matrix::identity(3), PINV_REL_CUTOFF).unwrap();
        assert!(p.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-15);
        let p = pseudoinverse(&Matrix::diag(&[2.0, 0.0]), PINV_REL_CUTOFF).unwrap();
        assert!(p.sub(&Matrix::diag(&[0.5, 0.0])).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn pinv_penrose_conditions() {
        let a = random(4, 6, 11);
        let p = pseudoinverse(&a, PINV_REL_CUTOFF).unwrap();
        let rel = |x: &Matrix, y: &Matrix| {
            x.sub(y).unwrap().frobenius_norm() / y.frobenius_norm().max(1e-300)
        };
        let apa = a.matmul(&p).unwrap().matmul(&a).unwrap();
        let pap = p.matmul(&a).unwrap().matmul(&p).unwrap();
        let ap = a.matmul(&p).unwrap();
        let pa = p.matmul(&a).unwrap();
        assert!(rel(&apa, &a) < 1e-8);
        assert!(rel(&pap, &p) < 1e-8);
        assert!(rel(&ap.transpose(), &ap) < 1e-8);
        assert!(rel(&pa.transpose(), &pa) < 1e-8);
    }

    #[test]
    fn pinv_rejects_nonpositive_cutoff() {
        assert!(pseudoinverse(&Matrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&Matrix::diag(&[1.0, 1.0, 0.0]), RANK_REL_TOL).unwrap(), 2);
        assert_eq!(numerical_rank(&Matrix::zeros(3, 4), RANK_REL_TOL).unwrap(), 0);
        let low = random(12, 3, 1).matmul(&random(3, 10, 2)).unwrap();
        assert_eq!(numerical_rank(&low, RANK_REL_TOL).unwrap(), 3);
        assert!(numerical_rank(&low, 1.5).is_err());
    }
}
