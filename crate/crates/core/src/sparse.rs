//! Compressed-row sparse matrices and direct factorisations.
//!
//! Assembly writes into a fixed sparsity pattern through a precomputed
//! scatter map, so repeated assembly (depth-weighted masses change every
//! nonlinear iteration) never re-sorts triplets. Factorisations are backed by
//! `faer`'s supernodal sparse Cholesky and LU; the symbolic phase is kept and
//! reused whenever the pattern is unchanged.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{MatMut, Side};

use crate::error::{Result, SweError};

/// Sparse matrix in compressed row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed
    /// in input order, so the result is bitwise reproducible.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut trip = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &trip)
    }

    pub fn identity(n: usize) -> Self {
        let trip: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterates over the stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Returns the stored value at `(i, j)`, or zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    /// Computes `Aᵀ x` without forming the transpose.
    pub fn tmatvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
        y
    }

    /// Computes `|A|ᵀ |x|`, the magnitude bound on rounding in `Aᵀ x`.
    pub fn abs_tmatvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += (self.values[k] * xi).abs();
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    trip.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, &trip)
    }

    /// Returns `a·self + b·other` over the union of both patterns.
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            trip.extend(self.row(i).map(|(j, v)| (i, j, a * v)));
            trip.extend(other.row(i).map(|(j, v)| (i, j, b * v)));
        }
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    /// Largest absolute stored value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |A - Aᵀ|` over all entries.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        self.linear_combination(1.0, &self.transpose(), -1.0).max_abs()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        out
    }

    /// Stacks a 2×2 arrangement of blocks into one matrix.
    pub fn block2x2(a: &CsrMatrix, b: &CsrMatrix, c: &CsrMatrix, d: &CsrMatrix) -> Self {
        assert_eq!(a.nrows, b.nrows);
        assert_eq!(c.nrows, d.nrows);
        assert_eq!(a.ncols, c.ncols);
        assert_eq!(b.ncols, d.ncols);
        let (r0, c0) = (a.nrows, a.ncols);
        let mut trip = Vec::with_capacity(a.nnz() + b.nnz() + c.nnz() + d.nnz());
        for i in 0..r0 {
            trip.extend(a.row(i).map(|(j, v)| (i, j, v)));
            trip.extend(b.row(i).map(|(j, v)| (i, c0 + j, v)));
        }
        for i in 0..c.nrows {
            trip.extend(c.row(i).map(|(j, v)| (r0 + i, j, v)));
            trip.extend(d.row(i).map(|(j, v)| (r0 + i, c0 + j, v)));
        }
        Self::from_triplets(r0 + c.nrows, c0 + b.ncols, &trip)
    }

    /// Reads the matrix as the column-compressed form of its transpose.
    fn as_faer_transpose(&self) -> SparseColMat<usize, f64> {
        let symbolic = SymbolicSparseColMat::new_checked(
            self.ncols,
            self.nrows,
            self.row_ptr.clone(),
            None,
            self.col_idx.clone(),
        );
        SparseColMat::new(symbolic, self.values.clone())
    }
}

/// Element-to-matrix scatter map over a fixed pattern.
///
/// `positions[e * nr * nc + a * nc + b]` is the value slot receiving local
/// entry `(a, b)` of element `e`.
#[derive(Debug, Clone)]
pub struct ScatterPattern {
    template: CsrMatrix,
    positions: Vec<usize>,
    local_rows: usize,
    local_cols: usize,
}

impl ScatterPattern {
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_maps: &[Vec<usize>],
        col_maps: &[Vec<usize>],
    ) -> Self {
        assert_eq!(row_maps.len(), col_maps.len());
        let local_rows = row_maps.first().map_or(0, Vec::len);
        let local_cols = col_maps.first().map_or(0, Vec::len);
        let mut trip = Vec::with_capacity(row_maps.len() * local_rows * local_cols);
        for (rm, cm) in row_maps.iter().zip(col_maps) {
            for &r in rm {
                for &c in cm {
                    trip.push((r, c, 0.0));
                }
            }
        }
        let template = CsrMatrix::from_triplets(nrows, ncols, &trip);
        let mut positions = Vec::with_capacity(trip.len());
        for (rm, cm) in row_maps.iter().zip(col_maps) {
            for &r in rm {
                for &c in cm {
                    positions.push(template.position(r, c).expect("pattern entry"));
                }
            }
        }
        Self {
            template,
            positions,
            local_rows,
            local_cols,
        }
    }

    pub fn local_size(&self) -> (usize, usize) {
        (self.local_rows, self.local_cols)
    }

    /// Sums element matrices (row-major, one block per element, in element
    /// order) into a fresh matrix on this pattern.
    pub fn assemble(&self, element_blocks: &[f64]) -> CsrMatrix {
        let mut out = self.template.clone();
        self.assemble_into(element_blocks, &mut out);
        out
    }

    pub fn assemble_into(&self, element_blocks: &[f64], out: &mut CsrMatrix) {
        assert_eq!(element_blocks.len(), self.positions.len());
        out.values.iter_mut().for_each(|v| *v = 0.0);
        for (&pos, &v) in self.positions.iter().zip(element_blocks) {
            out.values[pos] += v;
        }
    }

    /// Assembles the same local matrix on every element.
    pub fn assemble_uniform(&self, local: &[f64]) -> CsrMatrix {
        let n = self.local_rows * self.local_cols;
        assert_eq!(local.len(), n);
        let mut out = self.template.clone();
        for (k, &pos) in self.positions.iter().enumerate() {
            out.values[pos] += local[k % n];
        }
        out
    }
}

/// Which direct factorisation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    /// Symmetric positive definite.
    Cholesky,
    /// General square.
    Lu,
}

#[derive(Debug, Clone)]
enum Symbolic {
    Llt(SymbolicLlt<usize>),
    Lu(SymbolicLu<usize>),
}

#[derive(Debug, Clone)]
enum Numeric {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

/// A direct sparse factorisation that can be refreshed with new values on
/// the same sparsity pattern.
#[derive(Debug, Clone)]
pub struct SparseFactor {
    n: usize,
    symbolic: Symbolic,
    numeric: Numeric,
}

impl SparseFactor {
    pub fn new(a: &CsrMatrix, kind: FactorKind) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(SweError::Solver(format!(
                "cannot factorise a {}x{} matrix",
                a.nrows, a.ncols
            )));
        }
        faer::set_global_parallelism(faer::Par::Seq);
        let at = a.as_faer_transpose();
        let symbolic = match kind {
            FactorKind::Cholesky => Symbolic::Llt(
                SymbolicLlt::try_new(at.symbolic(), Side::Lower)
                    .map_err(|e| SweError::Solver(format!("symbolic Cholesky: {e:?}")))?,
            ),
            FactorKind::Lu => Symbolic::Lu(
                SymbolicLu::try_new(at.symbolic())
                    .map_err(|e| SweError::Solver(format!("symbolic LU: {e:?}")))?,
            ),
        };
        let numeric = Self::numeric(&symbolic, &at)?;
        Ok(Self {
            n: a.nrows,
            symbolic,
            numeric,
        })
    }

    pub fn cholesky(a: &CsrMatrix) -> Result<Self> {
        Self::new(a, FactorKind::Cholesky)
    }

    pub fn lu(a: &CsrMatrix) -> Result<Self> {
        Self::new(a, FactorKind::Lu)
    }

    fn numeric(symbolic: &Symbolic, at: &SparseColMat<usize, f64>) -> Result<Numeric> {
        Ok(match symbolic {
            Symbolic::Llt(s) => Numeric::Llt(
                Llt::try_new_with_symbolic(s.clone(), at.as_ref(), Side::Lower)
                    .map_err(|e| SweError::Solver(format!("Cholesky: {e:?}")))?,
            ),
            Symbolic::Lu(s) => Numeric::Lu(
                Lu::try_new_with_symbolic(s.clone(), at.as_ref())
                    .map_err(|e| SweError::Solver(format!("LU: {e:?}")))?,
            ),
        })
    }

    /// Refactorises with new values. `a` must have the pattern this factor
    /// was built from.
    pub fn refactor(&mut self, a: &CsrMatrix) -> Result<()> {
        assert_eq!(a.nrows, self.n);
        let at = a.as_faer_transpose();
        self.numeric = Self::numeric(&self.symbolic, &at)?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let rhs = MatMut::from_column_major_slice_mut(x, self.n, 1);
        // The stored factor is of Aᵀ.
        match &self.numeric {
            Numeric::Llt(f) => f.solve_in_place(rhs),
            Numeric::Lu(f) => f.solve_transpose_in_place(rhs),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
