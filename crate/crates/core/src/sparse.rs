//! CSR sparse matrices and row-major dense matrices.
//!
//! These two types carry every adjacency matrix and activation in the crate.
//! Sparse matrices are kept in canonical CSR form: column indices strictly
//! increasing within each row, no stored zeros, no duplicate entries. All
//! matrices are immutable after construction and safe to share across threads.
//! Per-row reductions run in ascending column order, so results are
//! bit-deterministic.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SparseError {
    #[error("triplet {position} has out-of-range index ({row}, {col}) for a {n_rows}x{n_cols} matrix")]
    TripletOutOfRange {
        position: usize,
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("dimension mismatch: {a_rows}x{a_cols} sparse times {b_rows}x{b_cols} dense")]
    DimMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
    #[error("row {row} has negative sum {sum}; adjacency values must be non-negative")]
    NegativeRowSum { row: usize, sum: f64 },
    #[error("matrix is {n_rows}x{n_cols}, expected square")]
    NotSquare { n_rows: usize, n_cols: usize },
}

/// Sparse matrix in canonical compressed-sparse-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a canonical CSR matrix from (row, col, value) triplets.
    ///
    /// Duplicate (row, col) pairs are summed; entries that sum to zero are
    /// dropped. Out-of-range indices are rejected with the offending triplet
    /// position.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        for (position, &(row, col, _)) in triplets.iter().enumerate() {
            if row >= n_rows || col >= n_cols {
                return Err(SparseError::TripletOutOfRange {
                    position,
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut i = 0;
        while i < sorted.len() {
            let (row, col, mut value) = sorted[i];
            i += 1;
            while i < sorted.len() && sorted[i].0 == row && sorted[i].1 == col {
                value += sorted[i].2;
                i += 1;
            }
            if value != 0.0 {
                col_idx.push(col);
                values.push(value);
                row_ptr[row + 1] += 1;
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// The n-by-n identity pattern.
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// A matrix with no stored entries.
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Iterates stored entries as (row, col, value) in row-major order.
    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Sparse-dense product. Work is proportional to nnz times `x.n_cols()`.
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix, SparseError> {
        if self.n_cols != x.n_rows() {
            return Err(SparseError::DimMismatch {
                a_rows: self.n_rows,
                a_cols: self.n_cols,
                b_rows: x.n_rows(),
                b_cols: x.n_cols(),
            });
        }
        let mut out = DenseMatrix::zeros(self.n_rows, x.n_cols());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let out_row = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let x_row = x.row(c);
                for (o, &xv) in out_row.iter_mut().zip(x_row) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// Divides every row with positive sum by that sum (`D^{-1} A`).
    ///
    /// Rows with zero sum stay empty; they contribute nothing downstream.
    pub fn row_normalize(&self) -> Result<SparseMatrix, SparseError> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let sum: f64 = vals.iter().sum();
            if sum < 0.0 {
                return Err(SparseError::NegativeRowSum { row: r, sum });
            }
            if sum == 0.0 {
                continue;
            }
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((r, c, v / sum));
            }
        }
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    /// Symmetric normalization `D^{-1/2} A D^{-1/2}` with row-sum degrees.
    ///
    /// Entries touching a zero-degree row or column are dropped.
    pub fn sym_normalize(&self) -> Result<SparseMatrix, SparseError> {
        if self.n_rows != self.n_cols {
            return Err(SparseError::NotSquare {
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        let mut degrees = vec![0.0f64; self.n_rows];
        for r in 0..self.n_rows {
            let (_, vals) = self.row(r);
            let sum: f64 = vals.iter().sum();
            if sum < 0.0 {
                return Err(SparseError::NegativeRowSum { row: r, sum });
            }
            degrees[r] = sum;
        }
        let mut triplets = Vec::with_capacity(self.nnz());
        for (r, c, v) in self.iter_entries() {
            if degrees[r] > 0.0 && degrees[c] > 0.0 {
                triplets.push((r, c, v / (degrees[r] * degrees[c]).sqrt()));
            }
        }
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    /// Canonical CSR of the transpose.
    pub fn transpose(&self) -> SparseMatrix {
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            row_ptr[c + 1] += row_ptr[c];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0f64; self.nnz()];
        let mut next = row_ptr.clone();
        for (r, c, v) in self.iter_entries() {
            let slot = next[c];
            col_idx[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Entrywise pattern union of two same-shaped matrices, all values 1.
    pub fn pattern_union(&self, other: &SparseMatrix) -> Result<SparseMatrix, SparseError> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(SparseError::DimMismatch {
                a_rows: self.n_rows,
                a_cols: self.n_cols,
                b_rows: other.n_rows,
                b_cols: other.n_cols,
            });
        }
        let mut triplets: Vec<(usize, usize, f64)> = self
            .iter_entries()
            .chain(other.iter_entries())
            .map(|(r, c, _)| (r, c, 1.0))
            .collect();
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        triplets.dedup_by_key(|t| (t.0, t.1));
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    /// Dense copy; intended for small matrices and test oracles.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter_entries() {
            out.set(r, c, v);
        }
        out
    }

    /// Checks the canonical-form invariants; used by tests.
    pub fn is_canonical(&self) -> bool {
        if self.row_ptr.len() != self.n_rows + 1 || self.row_ptr[0] != 0 {
            return false;
        }
        if *self.row_ptr.last().unwrap() != self.values.len()
            || self.col_idx.len() != self.values.len()
        {
            return false;
        }
        for r in 0..self.n_rows {
            if self.row_ptr[r] > self.row_ptr[r + 1] {
                return false;
            }
            let (cols, vals) = self.row(r);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return false;
                }
            }
            if cols.iter().any(|&c| c >= self.n_cols) || vals.iter().any(|&v| v == 0.0) {
                return false;
            }
        }
        true
    }
}

/// Dense matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    /// Wraps a row-major buffer. Panics if the length does not match.
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            n_rows * n_cols,
            "buffer length {} does not match {}x{}",
            data.len(),
            n_rows,
            n_cols
        );
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n_cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    /// Dense product; shapes are programmer responsibility and panic on misuse.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.n_cols, other.n_rows,
            "matmul shape mismatch: {}x{} times {}x{}",
            self.n_rows, self.n_cols, other.n_rows, other.n_cols
        );
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_cols, self.n_rows);
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Elementwise map into a new matrix.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += scale * other`. Panics on shape mismatch.
    pub fn add_scaled(&mut self, scale: f64, other: &DenseMatrix) {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// Sum of elementwise products; the Frobenius inner product.
    pub fn dot(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        self.map(|v| s * v)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
