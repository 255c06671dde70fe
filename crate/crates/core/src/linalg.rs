//! Dense and packed-symmetric matrices with a Cholesky factorization.
//!
//! Everything here is 64-bit. The symmetric type stores the upper triangle
//! row by row; the Cholesky factor stores the lower triangle row by row, so
//! the inner products of the factorization run over contiguous memory.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dot product with four independent partial sums.
///
/// The summation order is fixed, so results are reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let mut acc = [0.0f64; 4];
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
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

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    /// Row vector times matrix: `xᵀ A`, with `len(x) = rows`.
    pub fn left_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, found: x.len() });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        Ok(out)
    }

    /// Matrix times column vector: `A x`, with `len(x) = cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: x.len() });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let row = self.row(i);
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in row.iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), dst);
                }
            }
        }
        Ok(out)
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{}x{} vs {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            )));
        }
        Ok(())
    }
}

/// Symmetric matrix in packed upper-triangular, row-major storage.
///
/// Row `i` holds `A[i][i..n]` starting at offset `i*n - i*(i-1)/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricPacked {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricPacked {
    pub fn zeros(n: usize) -> Self {
        SymmetricPacked { n, data: vec![0.0; n * (n + 1) / 2] }
    }

    pub fn from_packed(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * (n + 1) / 2 {
            return Err(Error::DimensionMismatch { expected: n * (n + 1) / 2, found: data.len() });
        }
        Ok(SymmetricPacked { n, data })
    }

    /// Packs the upper triangle of a square dense matrix.
    pub fn from_dense_upper(a: &Matrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch { expected: a.rows(), found: a.cols() });
        }
        let n = a.rows();
        let mut s = SymmetricPacked::zeros(n);
        for i in 0..n {
            s.row_tail_mut(i).copy_from_slice(&a.row(i)[i..]);
        }
        Ok(s)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize) -> usize {
        // sum_{r<i} (n - r) = i*n - i*(i-1)/2
        i * self.n - (i * i - i) / 2
    }

    /// `A[i][i..n]`
    #[inline]
    pub fn row_tail(&self, i: usize) -> &[f64] {
        let o = self.offset(i);
        &self.data[o..o + self.n - i]
    }

    #[inline]
    pub fn row_tail_mut(&mut self, i: usize) -> &mut [f64] {
        let o = self.offset(i);
        let n = self.n;
        &mut self.data[o..o + n - i]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        self.data[self.offset(r) + (c - r)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.row_tail(i)[0]).sum()
    }

    /// `A += alpha * x xᵀ`
    pub fn rank_one_update(&mut self, alpha: f64, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
        }
        for i in 0..self.n {
            let s = alpha * x[i];
            if s != 0.0 {
                axpy(s, &x[i..], self.row_tail_mut(i));
            }
        }
        Ok(())
    }

    /// `A += Σ_b x_b x_bᵀ` over a batch of vectors, touching `A` once.
    pub fn batch_update(&mut self, xs: &[&[f64]]) -> Result<()> {
        for x in xs {
            if x.len() != self.n {
                return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
            }
        }
        for i in 0..self.n {
            let n = self.n;
            let row = {
                let o = self.offset(i);
                &mut self.data[o..o + n - i]
            };
            for x in xs {
                let s = x[i];
                if s != 0.0 {
                    axpy(s, &x[i..], row);
                }
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &SymmetricPacked) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> SymmetricPacked {
        SymmetricPacked { n: self.n, data: self.data.iter().map(|v| v * alpha).collect() }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (k, &v) in self.row_tail(i).iter().enumerate() {
                m.set(i, i + k, v);
                m.set(i + k, i, v);
            }
        }
        m
    }

    /// Frobenius norm of the full symmetric matrix.
    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let row = self.row_tail(i);
            s += row[0] * row[0];
            s += 2.0 * dot(&row[1..], &row[1..]);
        }
        libm::sqrt(s)
    }

    /// `(A + shift·I) X` for a dense `n × d` right-hand side.
    pub fn mul_matrix_shifted(&self, x: &Matrix, shift: f64) -> Result<Matrix> {
        if x.rows() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.rows() });
        }
        let d = x.cols();
        let mut y = Matrix::zeros(self.n, d);
        for i in 0..self.n {
            let row = self.row_tail(i);
            let xi: Vec<f64> = x.row(i).to_vec();
            {
                let yi = y.row_mut(i);
                axpy(row[0] + shift, &xi, yi);
            }
            for (k, &a) in row.iter().enumerate().skip(1) {
                if a == 0.0 {
                    continue;
                }
                let j = i + k;
                {
                    let yi = y.row_mut(i);
                    axpy(a, x.row(j), yi);
                }
                let yj = y.row_mut(j);
                axpy(a, &xi, yj);
            }
        }
        Ok(y)
    }
}

/// Lower-triangular Cholesky factor `L` with `A + shift·I = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    /// Packed lower rows: `L[i][0..=i]` at offset `i(i+1)/2`.
    data: Vec<f64>,
}

/// Failure of the factorization at a given pivot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotPositiveDefinite {
    pub index: usize,
    /// The Schur-complement diagonal at the failing step, an upper bound on
    /// the smallest eigenvalue of the shifted matrix.
    pub pivot: f64,
}

#[inline]
fn lower_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

impl Cholesky {
    /// Factorizes `a + shift·I`.
    pub fn factor(a: &SymmetricPacked, shift: f64) -> core::result::Result<Self, NotPositiveDefinite> {
        let n = a.dim();
        let mut data = vec![0.0; n * (n + 1) / 2];
        // Lower row i, column j (j <= i) is A[j][i] from the upper storage.
        for j in 0..n {
            let tail = a.row_tail(j);
            for (k, &v) in tail.iter().enumerate() {
                let i = j + k;
                data[lower_offset(i) + j] = v;
            }
            data[lower_offset(j) + j] += shift;
        }
        let mut chol = Cholesky { n, data };
        chol.factor_in_place()?;
        Ok(chol)
    }

    fn factor_in_place(&mut self) -> core::result::Result<(), NotPositiveDefinite> {
        let n = self.n;
        let data = &mut self.data;
        let mut i0 = 0;
        while i0 < n {
            let block = (n - i0).min(4);
            // Columns left of the block: four rows share every load of row j.
            for j in 0..i0 {
                let oj = lower_offset(j);
                let (head, rest) = data.split_at_mut(lower_offset(i0));
                let lj = &head[oj..oj + j];
                let ljj = head[oj + j];
                let mut sums = [0.0f64; 4];
                {
                    let rows: [&[f64]; 4] = core::array::from_fn(|r| {
                        if r < block {
                            let o = lower_offset(i0 + r) - lower_offset(i0);
                            &rest[o..o + j]
                        } else {
                            &[][..]
                        }
                    });
                    if block == 4 {
                        sums = dot4(rows, lj);
                    } else {
                        for r in 0..block {
                            sums[r] = dot(rows[r], lj);
                        }
                    }
                }
                for (r, s) in sums.iter().enumerate().take(block) {
                    let o = lower_offset(i0 + r) - lower_offset(i0);
                    rest[o + j] = (rest[o + j] - s) / ljj;
                }
            }
            // Triangle inside the block.
            for r in 0..block {
                let i = i0 + r;
                let oi = lower_offset(i);
                for j in i0..i {
                    let oj = lower_offset(j);
                    let s = dot(&data[oi..oi + j], &data[oj..oj + j]);
                    data[oi + j] = (data[oi + j] - s) / data[oj + j];
                }
                let s = dot(&data[oi..oi + i], &data[oi..oi + i]);
                let d = data[oi + i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return Err(NotPositiveDefinite { index: i, pivot: d });
                }
                data[oi + i] = libm::sqrt(d);
            }
            i0 += block;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let o = lower_offset(i);
        &self.data[o..o + i + 1]
    }

    /// Solves `(A + shift·I) X = B` in place for an `n × d` right-hand side.
    pub fn solve_in_place(&self, b: &mut Matrix) -> Result<()> {
        if b.rows() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: b.rows() });
        }
        let d = b.cols();
        let n = self.n;
        let mut tmp = vec![0.0; d];
        // Forward: L Z = B.
        for i in 0..n {
            let li = self.row(i);
            tmp.copy_from_slice(b.row(i));
            for (k, &l) in li[..i].iter().enumerate() {
                if l != 0.0 {
                    axpy(-l, b.row(k), &mut tmp);
                }
            }
            let inv = 1.0 / li[i];
            for (dst, v) in b.row_mut(i).iter_mut().zip(&tmp) {
                *dst = v * inv;
            }
        }
        // Backward: Lᵀ X = Z, sweeping rows of L from the bottom.
        for i in (0..n).rev() {
            let li = self.row(i);
            let inv = 1.0 / li[i];
            for v in b.row_mut(i).iter_mut() {
                *v *= inv;
            }
            tmp.copy_from_slice(b.row(i));
            for (k, &l) in li[..i].iter().enumerate() {
                if l != 0.0 {
                    axpy(-l, &tmp, b.row_mut(k));
                }
            }
        }
        Ok(())
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut m = Matrix::from_vec(b.len(), 1, b.to_vec())?;
        self.solve_in_place(&mut m)?;
        Ok(m.into_vec())
    }

    /// `log det(A + shift·I)`
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * libm::log(self.row(i)[i])).sum()
    }
}

/// Four dot products against one shared vector.
#[inline]
fn dot4(rows: [&[f64]; 4], x: &[f64]) -> [f64; 4] {
    let n = x.len();
    let (r0, r1, r2, r3) = (&rows[0][..n], &rows[1][..n], &rows[2][..n], &rows[3][..n]);
    let mut a = [[0.0f64; 2]; 4];
    let pairs = n / 2;
    for p in 0..pairs {
        let k = 2 * p;
        let (x0, x1) = (x[k], x[k + 1]);
        a[0][0] += r0[k] * x0;
        a[0][1] += r0[k + 1] * x1;
        a[1][0] += r1[k] * x0;
        a[1][1] += r1[k + 1] * x1;
        a[2][0] += r2[k] * x0;
        a[2][1] += r2[k + 1] * x1;
        a[3][0] += r3[k] * x0;
        a[3][1] += r3[k + 1] * x1;
    }
    let mut out = [a[0][0] + a[0][1], a[1][0] + a[1][1], a[2][0] + a[2][1], a[3][0] + a[3][1]];
    if n % 2 == 1 {
        let k = n - 1;
        out[0] += r0[k] * x[k];
        out[1] += r1[k] * x[k];
        out[2] += r2[k] * x[k];
        out[3] += r3[k] * x[k];
    }
    out
}
