//! Dense row-major `f64` matrices.
//!
//! Everything in this crate is at most two-dimensional; a vector is a `1×n`
//! or `n×1` matrix and a scalar is `1×1`.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(shape_err(
                "from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for
    /// literals in tests and fixtures.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 1.0)
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(1, 1, value)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Standard-normal entries multiplied by `scale`.
    pub fn randn<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(shape_err("item", format!("expected 1x1, got {}x{}", self.rows, self.cols)));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(what.to_string()))
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(shape_err(
                "matmul",
                format!("{}x{} by {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let (p, q, r) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; p * r];
        for i in 0..p {
            let a_row = &self.data[i * q..(i + 1) * q];
            let o_row = &mut out[i * r..(i + 1) * r];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * r..(k + 1) * r];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            rows: p,
            cols: r,
            data: out,
        })
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.cols {
            return Err(shape_err(
                "matmul_t",
                format!("{}x{} by ({}x{})^T", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let mut out = Tensor::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(self.row(i), other.row(j));
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Columns `start..start + len` as a new matrix.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor> {
        if start + len > self.cols {
            return Err(shape_err(
                "slice_cols",
                format!("{start}+{len} exceeds {} columns", self.cols),
            ));
        }
        let mut data = Vec::with_capacity(self.rows * len);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + len]);
        }
        Ok(Tensor {
            rows: self.rows,
            cols: len,
            data,
        })
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let rows = parts.first().map_or(0, |t| t.rows);
        if parts.iter().any(|t| t.rows != rows) {
            return Err(shape_err("concat_cols", "row counts differ"));
        }
        let cols = parts.iter().map(|t| t.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for t in parts {
                data.extend_from_slice(t.row(r));
            }
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Rows of `self` selected by `indices`, in order.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(shape_err(
                    "gather_rows",
                    format!("index {i} out of {} rows", self.rows),
                ));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Tensor {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(shape_err(
                "max_abs_diff",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_times_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Tensor::randn(3, 5, 1.0, &mut rng);
        assert_eq!(Tensor::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn hand_multiplication() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Tensor::from_rows(&[&[1.0], &[1.0]]);
        assert_eq!(a.matmul(&b).unwrap(), Tensor::from_rows(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn zeros_annihilate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = Tensor::randn(3, 4, 1.0, &mut rng);
        assert_eq!(Tensor::zeros(2, 3).matmul(&b).unwrap(), Tensor::zeros(2, 4));
    }

    #[test]
    fn inner_dimension_mismatch() {
        let err = Tensor::zeros(2, 3).matmul(&Tensor::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Shape { op: "matmul", .. }));
    }

    #[test]
    fn matmul_t_agrees_with_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::randn(4, 3, 1.0, &mut rng);
        let b = Tensor::randn(5, 3, 1.0, &mut rng);
        let lhs = a.matmul_t(&b).unwrap();
        let rhs = a.matmul(&b.transpose()).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-14);
    }

    #[test]
    fn slice_and_concat_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Tensor::randn(3, 6, 1.0, &mut rng);
        let l = a.slice_cols(0, 2).unwrap();
        let r = a.slice_cols(2, 4).unwrap();
        assert_eq!(Tensor::concat_cols(&[&l, &r]).unwrap(), a);
        assert!(a.slice_cols(5, 2).is_err());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(2, 2, vec![1.0; 3]).is_err());
    }
}
