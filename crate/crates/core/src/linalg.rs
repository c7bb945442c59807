//! Minimal dense / CSR storage and the handful of kernels the solvers need.

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

#[inline]
pub fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn max_abs<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Column-major dense matrix: column `j` is `data[j*rows..(j+1)*rows]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n, d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
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
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// Compressed sparse row matrix. Column indices are strictly increasing per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn new(cols: usize, indptr: Vec<usize>, indices: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if indptr.is_empty() || indptr[0] != 0 {
            return Err(invalid("indptr must start at 0"));
        }
        if *indptr.last().unwrap() != indices.len() || indices.len() != values.len() {
            return Err(invalid("indptr / indices / values lengths disagree"));
        }
        for w in indptr.windows(2) {
            if w[0] > w[1] {
                return Err(invalid("indptr not monotone"));
            }
            let row = &indices[w[0]..w[1]];
            if row.windows(2).any(|p| p[0] >= p[1]) {
                return Err(invalid("column indices not strictly increasing"));
            }
            if row.last().is_some_and(|&c| c >= cols) {
                return Err(invalid("column index out of range"));
            }
        }
        Ok(Self { cols, indptr, indices, values })
    }

    pub fn from_row_entries(cols: usize, rows: &[Vec<(usize, T)>]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for &(j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self::new(cols, indptr, indices, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn with_cols(mut self, cols: usize) -> Result<Self> {
        if self.indices.iter().any(|&j| j >= cols) {
            return Err(invalid(format!("dimension override {cols} smaller than max column index")));
        }
        self.cols = cols;
        Ok(self)
    }
}

/// Design matrix of one shard or one dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Design<T> {
    Dense(DenseMatrix<T>),
    Sparse(CsrMatrix<T>),
}

impl<T: Scalar> Design<T> {
    pub fn rows(&self) -> usize {
        match self {
            Design::Dense(m) => m.rows(),
            Design::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Design::Dense(m) => m.cols(),
            Design::Sparse(m) => m.cols(),
        }
    }

    /// `out = A x`, skipping zero entries of `x` for dense storage.
    pub fn mul_vec(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(out.len(), self.rows());
        match self {
            Design::Dense(m) => {
                out.iter_mut().for_each(|o| *o = T::zero());
                for (j, &xj) in x.iter().enumerate() {
                    if xj != T::zero() {
                        axpy(xj, m.col(j), out);
                    }
                }
            }
            Design::Sparse(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let (idx, val) = m.row(i);
                    *o = idx.iter().zip(val).fold(T::zero(), |acc, (&j, &v)| acc + v * x[j]);
                }
            }
        }
    }

    /// `out = Aᵀ r`.
    pub fn tmul_vec(&self, r: &[T], out: &mut [T]) {
        debug_assert_eq!(r.len(), self.rows());
        debug_assert_eq!(out.len(), self.cols());
        match self {
            Design::Dense(m) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = dot(m.col(j), r);
                }
            }
            Design::Sparse(m) => {
                out.iter_mut().for_each(|o| *o = T::zero());
                for (i, &ri) in r.iter().enumerate() {
                    if ri == T::zero() {
                        continue;
                    }
                    let (idx, val) = m.row(i);
                    for (&j, &v) in idx.iter().zip(val) {
                        out[j] += v * ri;
                    }
                }
            }
        }
    }

    /// `(Aᵀ r)_j` for every `j` in `mask`, written to `out[p]` for the p-th mask entry.
    /// `scratch` must have length `cols()` and is only touched for sparse storage.
    pub fn tmul_masked(&self, r: &[T], mask: &[usize], out: &mut [T], scratch: &mut [T]) {
        debug_assert_eq!(out.len(), mask.len());
        match self {
            Design::Dense(m) => {
                for (o, &j) in out.iter_mut().zip(mask) {
                    *o = dot(m.col(j), r);
                }
            }
            Design::Sparse(_) => {
                if mask.len() == self.cols() {
                    self.tmul_vec(r, out);
                } else {
                    self.tmul_vec(r, scratch);
                    for (o, &j) in out.iter_mut().zip(mask) {
                        *o = scratch[j];
                    }
                }
            }
        }
    }

    /// Entries of row `i` as `(col, value)` pairs, zeros omitted for dense storage.
    pub fn row_entries(&self, i: usize) -> Vec<(usize, T)> {
        match self {
            Design::Dense(m) => (0..m.cols())
                .map(|j| (j, m.get(i, j)))
                .filter(|&(_, v)| v != T::zero())
                .collect(),
            Design::Sparse(m) => {
                let (idx, val) = m.row(i);
                idx.iter().copied().zip(val.iter().copied()).collect()
            }
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Design<T> {
        match self {
            Design::Dense(m) => {
                let mut out = DenseMatrix::zeros(rows.len(), m.cols());
                for j in 0..m.cols() {
                    let src = m.col(j);
                    let dst = out.col_mut(j);
                    for (p, &i) in rows.iter().enumerate() {
                        dst[p] = src[i];
                    }
                }
                Design::Dense(out)
            }
            Design::Sparse(m) => {
                let entries: Vec<Vec<(usize, T)>> = rows
                    .iter()
                    .map(|&i| {
                        let (idx, val) = m.row(i);
                        idx.iter().copied().zip(val.iter().copied()).collect()
                    })
                    .collect();
                Design::Sparse(
                    CsrMatrix::from_row_entries(m.cols(), &entries).expect("rows of a valid matrix"),
                )
            }
        }
    }

    /// Restriction to a subset of columns (dense result).
    pub fn select_cols_dense(&self, cols: &[usize]) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.rows(), cols.len());
        match self {
            Design::Dense(m) => {
                for (p, &j) in cols.iter().enumerate() {
                    out.col_mut(p).copy_from_slice(m.col(j));
                }
            }
            Design::Sparse(m) => {
                for i in 0..m.rows() {
                    let (idx, val) = m.row(i);
                    for (p, &j) in cols.iter().enumerate() {
                        if let Ok(pos) = idx.binary_search(&j) {
                            out.set(i, p, val[pos]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Scale every column `j` by `s[j]`.
    pub fn scale_cols(&mut self, s: &[T]) {
        match self {
            Design::Dense(m) => {
                for (j, &sj) in s.iter().enumerate() {
                    m.col_mut(j).iter_mut().for_each(|v| *v *= sj);
                }
            }
            Design::Sparse(m) => {
                for (v, &j) in m.values.iter_mut().zip(&m.indices) {
                    *v *= s[j];
                }
            }
        }
    }

    /// Largest absolute entry per column.
    pub fn col_max_abs(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols()];
        match self {
            Design::Dense(m) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = max_abs(m.col(j));
                }
            }
            Design::Sparse(m) => {
                for (&j, &v) in m.indices.iter().zip(&m.values) {
                    out[j] = out[j].max(v.abs());
                }
            }
        }
        out
    }

    /// Bytes fed into problem fingerprints.
    pub(crate) fn hash_into(&self, h: &mut impl FnMut(&[u8])) {
        match self {
            Design::Dense(m) => {
                h(b"dense");
                h(&(m.rows() as u64).to_le_bytes());
                h(&(m.cols() as u64).to_le_bytes());
                for &v in m.as_slice() {
                    h(&v.as_f64().to_le_bytes());
                }
            }
            Design::Sparse(m) => {
                h(b"csr");
                h(&(m.cols() as u64).to_le_bytes());
                for &p in &m.indptr {
                    h(&(p as u64).to_le_bytes());
                }
                for &j in &m.indices {
                    h(&(j as u64).to_le_bytes());
                }
                for &v in &m.values {
                    h(&v.as_f64().to_le_bytes());
                }
            }
        }
    }
}

const POWER_ITERS: usize = 1000;
const POWER_RTOL: f64 = 1e-9;

/// Power iteration for the extreme eigenvalues of the Gram matrix `AᵀA`.
///
/// Returns `(λ_min, λ_max)`; `λ_min` is exactly zero whenever `rows < cols`.
pub fn gram_extreme_eigenvalues<T: Scalar>(a: &Design<T>) -> (T, T) {
    let d = a.cols();
    if d == 0 {
        return (T::zero(), T::zero());
    }
    let mut tmp = vec![T::zero(); a.rows()];
    let mut gram = |v: &[T], out: &mut [T]| {
        a.mul_vec(v, &mut tmp);
        a.tmul_vec(&tmp, out);
    };
    let lmax = power_iterate(d, |v, out| gram(v, out));
    if a.rows() < d || lmax == T::zero() {
        return (T::zero(), lmax);
    }
    // the shifted operator λ_max·I − AᵀA has top eigenvalue λ_max − λ_min
    let top_shift = power_iterate(d, |v, out| {
        gram(v, out);
        for (o, &vi) in out.iter_mut().zip(v) {
            *o = lmax * vi - *o;
        }
    });
    let lmin = (lmax - top_shift).max(T::zero());
    let rel_floor = T::of(1e-10) * lmax;
    (if lmin <= rel_floor { T::zero() } else { lmin }, lmax)
}

fn power_iterate<T: Scalar>(d: usize, mut op: impl FnMut(&[T], &mut [T])) -> T {
    // deterministic, non-degenerate start vector
    let mut v: Vec<T> = (0..d)
        .map(|j| T::one() + T::of(((j * 7919) % 104_729) as f64 / 104_729.0))
        .collect();
    let n = norm_sq(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    let mut w = vec![T::zero(); d];
    let mut lambda = T::zero();
    for _ in 0..POWER_ITERS {
        op(&v, &mut w);
        let next = dot(&v, &w);
        let nw = norm_sq(&w).sqrt();
        if nw == T::zero() {
            return T::zero();
        }
        for (vi, &wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        let converged = (next - lambda).abs() <= T::of(POWER_RTOL) * next.abs();
        lambda = next;
        if converged {
            break;
        }
    }
    // Rayleigh quotient at the final vector
    op(&v, &mut w);
    dot(&v, &w).max(lambda)
}

/// Eigenvalues of a symmetric `k×k` matrix (row-major) by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(mut a: Vec<f64>, k: usize) -> Vec<f64> {
    assert_eq!(a.len(), k * k);
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    s += a[i * k + j] * a[i * k + j];
                }
            }
        }
        s
    };
    let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        if off(&a) <= 1e-30 * scale {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[p * k + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let arp = a[r * k + p];
                    let arq = a[r * k + q];
                    a[r * k + p] = c * arp - s * arq;
                    a[r * k + q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let apr = a[p * k + r];
                    let aqr = a[q * k + r];
                    a[p * k + r] = c * apr - s * aqr;
                    a[q * k + r] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..k).map(|i| a[i * k + i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[Vec<f64>]) -> Design<f64> {
        Design::Dense(DenseMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn dense_and_sparse_products_agree() {
        let rows = vec![vec![1.0, 0.0, 2.0], vec![0.0, -3.0, 0.5]];
        let a = dense(&rows);
        let entries: Vec<Vec<(usize, f64)>> = (0..2).map(|i| a.row_entries(i)).collect();
        let s = Design::Sparse(CsrMatrix::from_row_entries(3, &entries).unwrap());
        let x = [0.5, 2.0, -1.0];
        let (mut y1, mut y2) = ([0.0; 2], [0.0; 2]);
        a.mul_vec(&x, &mut y1);
        s.mul_vec(&x, &mut y2);
        assert_eq!(y1, y2);
        assert_eq!(y1, [-1.5, -6.5]);
        let r = [1.0, 2.0];
        let (mut g1, mut g2) = ([0.0; 3], [0.0; 3]);
        a.tmul_vec(&r, &mut g1);
        s.tmul_vec(&r, &mut g2);
        assert_eq!(g1, g2);
        let mut masked = [0.0; 2];
        let mut scratch = [0.0; 3];
        s.tmul_masked(&r, &[0, 2], &mut masked, &mut scratch);
        assert_eq!(masked, [g1[0], g1[2]]);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let ev = symmetric_eigenvalues(vec![2.0, 1.0, 1.0, 2.0], 2);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        let ev = symmetric_eigenvalues(vec![4.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.5], 3);
        assert_eq!(ev, vec![-1.0, 2.5, 4.0]);
    }

    #[test]
    fn csr_rejects_unsorted_rows() {
        assert!(CsrMatrix::<f64>::new(3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::<f64>::new(2, vec![0, 1], vec![2], vec![1.0]).is_err());
    }

    #[test]
    fn gram_eigenvalues_of_diagonal() {
        let a = dense(&[vec![2.0, 0.0], vec![0.0, 0.5], vec![0.0, 0.0]]);
        let (lmin, lmax) = gram_extreme_eigenvalues(&a);
        assert!((lmax - 4.0).abs() < 1e-9);
        assert!((lmin - 0.25).abs() < 1e-6);
        let wide = dense(&[vec![1.0, 1.0, 0.0]]);
        let (lmin, lmax) = gram_extreme_eigenvalues(&wide);
        assert_eq!(lmin, 0.0);
        assert!((lmax - 2.0).abs() < 1e-9);
    }
}
