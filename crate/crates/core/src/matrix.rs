//! Dense row-major matrices.
//!
//! Products go through `matrixmultiply` with explicit row-major strides;
//! linear solves go through nalgebra's partial-pivot LU.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from nested rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::InvalidKernel {
                    row: i,
                    reason: format!("expected {} entries, found {}", cols, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: n, cols, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        if self.rows == 0 || other.cols == 0 || self.cols == 0 {
            return out;
        }
        // SAFETY: the three buffers are sized rows*cols for their shapes and
        // the strides describe contiguous row-major layouts.
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.cols,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        out
    }

    /// Row vector times matrix: `(vA)_j = sum_i v_i A_ij`.
    pub fn vecmat(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// Matrix times column vector.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    /// `self + s * other`
    pub fn add_scaled(&self, other: &Matrix, s: f64) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn add_assign_scaled(&mut self, other: &Matrix, s: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Principal submatrix on the given (sorted or unsorted) index list.
    pub fn submatrix(&self, idx: &[usize]) -> Matrix {
        let k = idx.len();
        let mut out = Matrix::zeros(k, k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * k + b] = self.get(i, j);
            }
        }
        out
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|x| x.is_nan())
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
        let (r, c) = m.shape();
        let mut out = Matrix::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                out.data[i * c + j] = m[(i, j)];
            }
        }
        out
    }

    pub fn inverse(&self, context: &'static str) -> Result<Matrix> {
        assert!(self.is_square());
        let inv = self.to_nalgebra().lu().try_inverse().ok_or(Error::Singular(context))?;
        let out = Matrix::from_nalgebra(&inv);
        if out.has_nan() {
            return Err(Error::NaN(context));
        }
        Ok(out)
    }

    /// Solves `A x = b` for a column vector `x`, with one step of iterative refinement.
    pub fn solve(&self, b: &[f64], context: &'static str) -> Result<Vec<f64>> {
        assert!(self.is_square());
        assert_eq!(b.len(), self.rows);
        let a = self.to_nalgebra();
        let lu = a.clone().lu();
        let rhs = DVector::from_column_slice(b);
        let mut x = lu.solve(&rhs).ok_or(Error::Singular(context))?;
        let r = &rhs - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::NaN(context));
        }
        Ok(x.iter().copied().collect())
    }

    /// Solves `x A = b` for a row vector `x`.
    pub fn solve_left(&self, b: &[f64], context: &'static str) -> Result<Vec<f64>> {
        self.transpose().solve(b, context)
    }
}

/// `(sum_{k<n} A^k, A^n)` by binary splitting: `T_{a+b} = T_a + A^a T_b`.
pub(crate) fn power_and_partial_sum(a: &Matrix, n: u64) -> (Matrix, Matrix) {
    let d = a.nrows();
    let mut pow = Matrix::identity(d);
    let mut sum = Matrix::zeros(d, d);
    // block = (T_{2^j}, A^{2^j})
    let mut block_sum = Matrix::identity(d);
    let mut block_pow = a.clone();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            // (T, P) <- (T + P * T_block, P * A_block)
            sum.add_assign_scaled(&pow.matmul(&block_sum), 1.0);
            pow = pow.matmul(&block_pow);
        }
        k >>= 1;
        if k > 0 {
            block_sum = block_sum.add_scaled(&block_pow.matmul(&block_sum), 1.0);
            block_pow = block_pow.matmul(&block_pow);
        }
    }
    (sum, pow)
}

pub(crate) fn matrix_power(a: &Matrix, n: u64) -> Matrix {
    let mut result = Matrix::identity(a.nrows());
    let mut base = a.clone();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            result = result.matmul(&base);
        }
        k >>= 1;
        if k > 0 {
            base = base.matmul(&base);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.to_rows(), vec![vec![7.0, -1.0], vec![16.0, -1.0]]);
    }

    #[test]
    fn partial_sums_match_loop() {
        let a = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        for n in 0..20u64 {
            let (t, p) = power_and_partial_sum(&a, n);
            let mut acc = Matrix::zeros(2, 2);
            let mut pk = Matrix::identity(2);
            for _ in 0..n {
                acc.add_assign_scaled(&pk, 1.0);
                pk = pk.matmul(&a);
            }
            assert!(t.max_abs_diff(&acc) < 1e-12, "n={n}");
            assert!(p.max_abs_diff(&pk) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn solve_left_roundtrip() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = a.solve_left(&[1.0, 2.0], "test").unwrap();
        let back = a.vecmat(&x);
        assert!((back[0] - 1.0).abs() < 1e-14 && (back[1] - 2.0).abs() < 1e-14);
    }
}
