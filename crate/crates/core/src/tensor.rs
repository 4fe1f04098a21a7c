//! Dense row-major tensors and matrices.
//!
//! Every multi-index is linearized row-major (first index most significant).
//! With that convention [`unfold`] and [`fold`] are pure reshapes and the
//! Kronecker ordering `A ⊗ B` lines up with the unfolded multi-indices.
//! Mode indices in this API are zero-based.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TeraError};

/// Dense order-N tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(TeraError::Shape("tensor order must be at least 1".into()));
    }
    if shape.iter().any(|&s| s == 0) {
        return Err(TeraError::Shape(format!("zero-sized mode in {shape:?}")));
    }
    Ok(shape.iter().product())
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(TeraError::Shape(format!(
                "data length {} does not match shape {shape:?} ({len})",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_shape(&shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for m in (0..shape.len()).rev() {
                idx[m] += 1;
                if idx[m] < shape[m] {
                    break;
                }
                idx[m] = 0;
            }
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &s)| acc * s + i)
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.data)
    }

    /// Contracts mode `n` against `b`: `C(.., j, ..) = Σ_i self(.., i, ..) · b(j, i)`.
    pub fn mode_n_product(&self, b: &Matrix, n: usize) -> Result<Tensor> {
        mode_n_product(self, b, n)
    }
}

pub(crate) fn frobenius(data: &[f64]) -> f64 {
    data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(TeraError::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(TeraError::Shape(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix {rows}x{cols}");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::eye(n, n)
    }

    /// Rectangular identity: ones on the main diagonal.
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix {rows}x{cols}");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(TeraError::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(TeraError::Shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for p in 0..self.cols {
                let a = self.data[i * self.cols + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * other.cols..(p + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(TeraError::Shape(format!(
                "matvec {}x{} by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn zip_with(&self, other: &Matrix, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.dims() != other.dims() {
            return Err(TeraError::Shape(format!(
                "{op} of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Element-wise (Hadamard) product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.data)
    }

    /// Frobenius inner product `Σ a_ij b_ij`.
    pub fn inner(&self, other: &Matrix) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(TeraError::Shape("inner product of unequal shapes".into()));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Views the matrix as an order-2 tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.rows, self.cols],
            data: self.data.clone(),
        }
    }
}

/// Fold/unfold contract: mode sizes, the split point, and the rank vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorizationScheme {
    mode_sizes: Vec<usize>,
    split: usize,
    ranks: Vec<usize>,
}

impl TensorizationScheme {
    /// `split` is the number of leading modes that index matrix rows.
    pub fn new(mode_sizes: Vec<usize>, split: usize, ranks: Vec<usize>) -> Result<Self> {
        let n = mode_sizes.len();
        if n < 2 {
            return Err(TeraError::Scheme(format!(
                "need at least two modes, got {n}"
            )));
        }
        if split == 0 || split >= n {
            return Err(TeraError::Scheme(format!(
                "split point must satisfy 1 <= k < N (k = {split}, N = {n})"
            )));
        }
        if let Some(i) = mode_sizes.iter().position(|&s| s < 2) {
            return Err(TeraError::Scheme(format!(
                "every mode size must be >= 2 (mode {} has size {})",
                i + 1,
                mode_sizes[i]
            )));
        }
        if ranks.len() != n {
            return Err(TeraError::Scheme(format!(
                "rank vector has {} entries for {n} modes",
                ranks.len()
            )));
        }
        for (i, (&r, &s)) in ranks.iter().zip(&mode_sizes).enumerate() {
            if r == 0 || r > s {
                return Err(TeraError::Scheme(format!(
                    "rank R_{} = {r} must satisfy 1 <= R_i <= I_i = {s}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            mode_sizes,
            split,
            ranks,
        })
    }

    /// Full-rank scheme: `R_i = I_i`.
    pub fn full_rank(mode_sizes: Vec<usize>, split: usize) -> Result<Self> {
        let ranks = mode_sizes.clone();
        Self::new(mode_sizes, split, ranks)
    }

    /// `left | right` modes with full ranks.
    pub fn from_sides(left: &[usize], right: &[usize]) -> Result<Self> {
        let modes = [left, right].concat();
        Self::full_rank(modes, left.len())
    }

    /// Keeps `rows` as a single mode and splits `cols` into `parts` equal modes.
    pub fn one_sided(rows: usize, cols: usize, parts: usize) -> Result<Self> {
        let mode = equal_mode_size(cols, parts)?;
        let mut modes = vec![rows];
        modes.extend(std::iter::repeat_n(mode, parts));
        Self::full_rank(modes, 1)
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn order(&self) -> usize {
        self.mode_sizes.len()
    }

    /// Matrix shape `(J1, J2)` this scheme folds.
    pub fn matrix_dims(&self) -> (usize, usize) {
        (
            self.mode_sizes[..self.split].iter().product(),
            self.mode_sizes[self.split..].iter().product(),
        )
    }

    /// Unfolded core shape `(∏_{i≤k} R_i, ∏_{i>k} R_i)`.
    pub fn rank_dims(&self) -> (usize, usize) {
        (
            self.ranks[..self.split].iter().product(),
            self.ranks[self.split..].iter().product(),
        )
    }

    /// Structural rank ceiling `min(∏_{i≤k} R_i, ∏_{i>k} R_i)`.
    pub fn rank_bound(&self) -> usize {
        let (a, b) = self.rank_dims();
        a.min(b)
    }

    pub fn rank_sum(&self) -> usize {
        self.ranks.iter().sum()
    }

    pub fn check_matrix(&self, rows: usize, cols: usize) -> Result<()> {
        let (j1, j2) = self.matrix_dims();
        if (j1, j2) != (rows, cols) {
            return Err(TeraError::Scheme(format!(
                "scheme folds a {j1}x{j2} matrix, not {rows}x{cols} (products of mode sizes must equal J1 and J2)"
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for TensorizationScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |s: &[usize]| {
            s.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(
            f,
            "{}|{}",
            join(&self.mode_sizes[..self.split]),
            join(&self.mode_sizes[self.split..])
        )?;
        if self.ranks != self.mode_sizes {
            write!(
                f,
                " r={}|{}",
                join(&self.ranks[..self.split]),
                join(&self.ranks[self.split..])
            )?;
        }
        Ok(())
    }
}

/// Size of each of `parts` equal modes whose product is `dim`.
pub fn equal_mode_size(dim: usize, parts: usize) -> Result<usize> {
    if parts == 0 {
        return Err(TeraError::Scheme("cannot split into zero modes".into()));
    }
    let guess = (dim as f64).powf(1.0 / parts as f64).round() as usize;
    for cand in guess.saturating_sub(1).max(2)..=guess + 1 {
        if cand.checked_pow(parts as u32) == Some(dim) {
            return Ok(cand);
        }
    }
    Err(TeraError::Scheme(format!(
        "{dim} is not a perfect {parts}-th power of an integer >= 2"
    )))
}

/// Matricization `A_[N;k]`: the first `k` modes index rows.
pub fn unfold(t: &Tensor, k: usize) -> Result<Matrix> {
    let n = t.order();
    if k == 0 || k >= n {
        return Err(TeraError::InvalidArgument(format!(
            "split index k = {k} out of range 1..{n}"
        )));
    }
    let rows = t.shape[..k].iter().product();
    let cols = t.shape[k..].iter().product();
    Matrix::new(rows, cols, t.data.clone())
}

/// Tensorization: inverse of [`unfold`] under `scheme`.
pub fn fold(m: &Matrix, scheme: &TensorizationScheme) -> Result<Tensor> {
    fold_to_shape(m, scheme.mode_sizes(), scheme.split())
}

/// Folds `m` into `shape`, whose first `k` modes index rows.
pub fn fold_to_shape(m: &Matrix, shape: &[usize], k: usize) -> Result<Tensor> {
    if k == 0 || k >= shape.len() {
        return Err(TeraError::InvalidArgument(format!(
            "split index k = {k} out of range 1..{}",
            shape.len()
        )));
    }
    let rows: usize = shape[..k].iter().product();
    let cols: usize = shape[k..].iter().product();
    if (rows, cols) != m.dims() {
        return Err(TeraError::Shape(format!(
            "cannot fold {}x{} into {shape:?} split at {k} ({rows}x{cols})",
            m.rows, m.cols
        )));
    }
    Tensor::new(shape.to_vec(), m.data.clone())
}

/// Mode-n product `C = A ×_n B` with `B` of shape `J × I_n`.
pub fn mode_n_product(t: &Tensor, b: &Matrix, n: usize) -> Result<Tensor> {
    if n >= t.order() {
        return Err(TeraError::InvalidArgument(format!(
            "mode {n} out of range for order-{} tensor",
            t.order()
        )));
    }
    let in_size = t.shape[n];
    if b.cols != in_size {
        return Err(TeraError::Shape(format!(
            "mode-{n} product: matrix has {} columns but mode size is {in_size}",
            b.cols
        )));
    }
    let outer: usize = t.shape[..n].iter().product();
    let inner: usize = t.shape[n + 1..].iter().product();
    let out_size = b.rows;
    let mut out = vec![0.0; outer * out_size * inner];
    for o in 0..outer {
        let src = &t.data[o * in_size * inner..(o + 1) * in_size * inner];
        let dst = &mut out[o * out_size * inner..(o + 1) * out_size * inner];
        for j in 0..out_size {
            let d = &mut dst[j * inner..(j + 1) * inner];
            for i in 0..in_size {
                let w = b.data[j * in_size + i];
                if w == 0.0 {
                    continue;
                }
                for (x, &s) in d.iter_mut().zip(&src[i * inner..(i + 1) * inner]) {
                    *x += w * s;
                }
            }
        }
    }
    let mut shape = t.shape.clone();
    shape[n] = out_size;
    Ok(Tensor { shape, data: out })
}

/// Kronecker product with `(A⊗B)(i·rb + j, p·cb + q) = A(i,p)·B(j,q)`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (rb, cb) = b.dims();
    Matrix::from_fn(a.rows * rb, a.cols * cb, |r, c| {
        a.get(r / rb, c / cb) * b.get(r % rb, c % cb)
    })
}

/// Left-to-right Kronecker product of a non-empty list.
pub fn kronecker_all<'a>(mats: impl IntoIterator<Item = &'a Matrix>) -> Option<Matrix> {
    let mut it = mats.into_iter();
    let first = it.next()?.clone();
    Some(it.fold(first, |acc, m| kronecker(&acc, m)))
}

pub fn frobenius_norm(t: &Tensor) -> f64 {
    t.frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unfold_order_two_is_identity() {
        let t = Tensor::from_fn(vec![2, 3], |i| (10 * i[0] + i[1]) as f64).unwrap();
        let m = unfold(&t, 1).unwrap();
        assert_eq!(m.dims(), (2, 3));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), (10 * i + j) as f64);
            }
        }
    }

    #[test]
    fn unfold_2x2x2_split_two() {
        let t = Tensor::new(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let m = unfold(&t, 2).unwrap();
        let expected =
            Matrix::from_rows(&[vec![0., 1.], vec![2., 3.], vec![4., 5.], vec![6., 7.]]).unwrap();
        assert_eq!(m, expected);
    }

    #[test]
    fn fold_inverts_unfold_example() {
        let m = Matrix::from_rows(&[vec![0., 1.], vec![2., 3.], vec![4., 5.], vec![6., 7.]])
            .unwrap();
        let scheme = TensorizationScheme::full_rank(vec![2, 2, 2], 2).unwrap();
        let t = fold(&m, &scheme).unwrap();
        assert_eq!(t.data(), &[0., 1., 2., 3., 4., 5., 6., 7.]);
    }

    #[test]
    fn fold_zero_matrix_is_zero_tensor() {
        let scheme = TensorizationScheme::full_rank(vec![2, 3, 3, 2], 2).unwrap();
        let t = fold(&Matrix::zeros(6, 6), &scheme).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
        assert_eq!(t.shape(), &[2, 3, 3, 2]);
    }

    #[test]
    fn unfold_rejects_bad_split() {
        let t = Tensor::zeros(vec![2, 2, 2]).unwrap();
        assert!(unfold(&t, 0).is_err());
        assert!(unfold(&t, 3).is_err());
    }

    #[test]
    fn fold_rejects_shape_mismatch() {
        let scheme = TensorizationScheme::full_rank(vec![2, 3], 1).unwrap();
        assert!(fold(&Matrix::zeros(3, 2), &scheme).is_err());
    }

    #[test]
    fn mode_product_hand_example() {
        let t = Matrix::from_rows(&[vec![1., 2.], vec![3., 4.]])
            .unwrap()
            .to_tensor();
        let b = Matrix::from_rows(&[vec![1., 1.]]).unwrap();
        let c = mode_n_product(&t, &b, 0).unwrap();
        assert_eq!(c.shape(), &[1, 2]);
        assert_eq!(c.data(), &[4., 6.]);
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let t = Tensor::zeros(vec![2, 3]).unwrap();
        assert!(mode_n_product(&t, &Matrix::zeros(2, 2), 1).is_err());
        assert!(mode_n_product(&t, &Matrix::zeros(2, 2), 2).is_err());
    }

    #[test]
    fn kronecker_examples() {
        assert_eq!(
            kronecker(&Matrix::identity(2), &Matrix::identity(3)),
            Matrix::identity(6)
        );
        let a = Matrix::from_rows(&[vec![1., 2.]]).unwrap();
        let b = Matrix::from_rows(&[vec![0., 1.]]).unwrap();
        assert_eq!(kronecker(&a, &b).data(), &[0., 1., 0., 2.]);
    }

    #[test]
    fn frobenius_345() {
        let t = Matrix::from_rows(&[vec![3., 4.]]).unwrap().to_tensor();
        assert_eq!(frobenius_norm(&t), 5.0);
        assert_eq!(frobenius_norm(&Tensor::zeros(vec![3, 3]).unwrap()), 0.0);
    }

    #[test]
    fn scheme_validation() {
        assert!(TensorizationScheme::full_rank(vec![4], 1).is_err());
        assert!(TensorizationScheme::full_rank(vec![4, 1, 4], 1).is_err());
        assert!(TensorizationScheme::full_rank(vec![4, 4], 2).is_err());
        assert!(TensorizationScheme::new(vec![4, 4], 1, vec![5, 4]).is_err());
        assert!(TensorizationScheme::new(vec![4, 4], 1, vec![0, 4]).is_err());
        let s = TensorizationScheme::new(vec![4, 4, 4, 4], 2, vec![2, 3, 4, 1]).unwrap();
        assert_eq!(s.matrix_dims(), (16, 16));
        assert_eq!(s.rank_dims(), (6, 4));
        assert_eq!(s.rank_bound(), 4);
        assert!(s.check_matrix(16, 8).is_err());
    }

    #[test]
    fn equal_modes() {
        assert_eq!(equal_mode_size(4096, 2).unwrap(), 64);
        assert_eq!(equal_mode_size(4096, 12).unwrap(), 2);
        assert_eq!(equal_mode_size(64, 3).unwrap(), 4);
        assert!(equal_mode_size(48, 2).is_err());
        let s = TensorizationScheme::one_sided(64, 64, 2).unwrap();
        assert_eq!(s.mode_sizes(), &[64, 8, 8]);
        assert_eq!(s.to_string(), "64|8,8");
    }
}
