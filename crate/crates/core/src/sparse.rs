//! Compressed sparse row storage and the symmetric indefinite factorization
//! used for all sparse solves.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky,
    SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sparse matrix in CSR form with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Zero matrix with the given sorted row patterns.
    pub fn from_pattern(ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            indices.extend(r);
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            values: vec![T::zero(); indices.len()],
            indices,
        }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let pattern = rows
            .iter()
            .map(|r| (0..ncols).filter(|&j| r[j] != T::zero()).collect())
            .collect();
        let mut m = Self::from_pattern(ncols, pattern);
        for (i, r) in rows.iter().enumerate() {
            for j in 0..ncols {
                if r[j] != T::zero() {
                    m.add(i, j, r[j]);
                }
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.indptr[i];
        self.indices[start..self.indptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] = self.values[k] + v;
    }

    /// Copies every strictly lower entry from its upper mirror, making the
    /// matrix bitwise symmetric. The pattern must be symmetric.
    pub fn mirror_upper(&mut self) {
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                if j < i {
                    self.values[k] = self.get(j, i);
                }
            }
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose_matvec(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.ncols];
        for (i, &yi) in y.iter().enumerate().take(self.nrows) {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[j] = out[j] + v * yi;
            }
        }
        out
    }

    /// `x^T M x`.
    pub fn quadratic_form(&self, x: &[T]) -> T {
        dot(x, &self.matvec(x))
    }

    /// Largest `|M_ij - M_ji|`.
    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        out
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.values {
            *v = *v * s;
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `LDL^T` factorization (fill-reducing ordering, no pivoting) of a symmetric
/// matrix given by its upper triangle in compressed-column form. Suitable for
/// definite and quasi-definite matrices.
pub struct SymmetricFactor {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    n: usize,
}

impl std::fmt::Debug for SymmetricFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymmetricFactor")
            .field("n", &self.n)
            .field("factor_nnz", &self.values.len())
            .finish()
    }
}

/// Upper triangle of a symmetric matrix in compressed-column form.
#[derive(Debug, Clone, Default)]
pub struct UpperCsc {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl UpperCsc {
    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        Self {
            n,
            col_ptr,
            row_idx: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
        }
    }

    /// Appends an entry to the column currently being built (rows ascending).
    pub fn push(&mut self, row: usize, v: f64) {
        self.row_idx.push(row);
        self.values.push(v);
    }

    pub fn finish_column(&mut self) {
        self.col_ptr.push(self.row_idx.len());
    }

    /// Upper triangle of a symmetric CSR matrix (row `j` equals column `j`).
    pub fn from_symmetric(m: &CsrMatrix<f64>) -> Self {
        let mut out = Self::with_capacity(m.nrows(), m.nnz() / 2 + m.nrows());
        for j in 0..m.nrows() {
            let (cols, vals) = m.row(j);
            for (&i, &v) in cols.iter().zip(vals) {
                if i <= j {
                    out.push(i, v);
                }
            }
            out.finish_column();
        }
        out
    }
}

impl SymmetricFactor {
    pub fn new(upper: &UpperCsc) -> Result<Self> {
        let n = upper.n;
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &upper.col_ptr, None, &upper.row_idx);
        let symbolic = factorize_symbolic_cholesky(
            sym,
            Side::Upper,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::Solver(format!("symbolic analysis failed: {e:?}")))?;
        let mut values = vec![0.0f64; symbolic.len_val()];
        let req = symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default());
        let mut mem = MemBuffer::try_new(req)
            .map_err(|_| Error::Solver("out of memory in factorization".into()))?;
        let a = SparseColMatRef::new(sym, &upper.values);
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                a,
                Side::Upper,
                LdltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::Solver(format!("factorization failed: {e:?}")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("factorization produced non-finite values".into()));
        }
        Ok(Self {
            symbolic,
            values,
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves in place for `ncols` right-hand sides stored column-major in `rhs`.
    pub fn solve_many_in_place(&self, rhs: &mut [f64], ncols: usize) {
        assert_eq!(rhs.len(), self.n * ncols);
        let ldlt = LdltRef::new(&self.symbolic, &self.values);
        let req = self.symbolic.solve_in_place_scratch::<f64>(ncols, Par::Seq);
        let mut mem = MemBuffer::new(req);
        let mat = MatMut::from_column_major_slice_mut(rhs, self.n, ncols);
        ldlt.solve_in_place_with_conj(Conj::No, mat, Par::Seq, MemStack::new(&mut mem));
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_many_in_place(&mut x, 1);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix<f64> {
        let rows = (0..n)
            .map(|i| {
                let mut r = Vec::new();
                if i > 0 {
                    r.push(i - 1);
                }
                r.push(i);
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        let mut m = CsrMatrix::from_pattern(n, rows);
        for i in 0..n {
            m.add(i, i, 2.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                m.add(i, i + 1, -1.0);
            }
        }
        m
    }

    #[test]
    fn csr_basic_ops() {
        let m = laplacian_1d(4);
        assert_eq!(m.nnz(), 10);
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(0, 3), 0.0);
        assert_eq!(m.matvec(&[1.0; 4]), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.transpose_matvec(&[1.0; 4]), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.max_asymmetry(), 0.0);
    }

    #[test]
    fn factor_solves_spd_and_quasi_definite() {
        let n = 30;
        let m = laplacian_1d(n);
        let f = SymmetricFactor::new(&UpperCsc::from_symmetric(&m)).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = m.matvec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
        // [[2, 1], [1, -3]] is quasi-definite
        let q = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, -3.0]]);
        let f = SymmetricFactor::new(&UpperCsc::from_symmetric(&q)).unwrap();
        let x = f.solve(&[3.0, -2.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn generic_over_f32() {
        let m = CsrMatrix::<f32>::from_dense(&[vec![1.0, 2.0], vec![2.0, 5.0]]);
        assert_eq!(m.quadratic_form(&[1.0, 1.0]), 10.0);
    }
}
