//! Compressed sparse row storage.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({i}, {j}) outside a {nrows}×{ncols} matrix"
                )));
            }
            rows[i].push((j, v));
        }
        let mut b = SparseBuilder::new(ncols);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(r.len());
            for (j, v) in r {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            b.push_row(merged.into_iter());
        }
        Ok(b.finish())
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut b = SparseBuilder::new(m.ncols());
        for i in 0..m.nrows() {
            b.push_row((0..m.ncols()).map(|j| (j, m[(i, j)])));
        }
        b.finish()
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

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `out = A x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *o = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `out += Aᵀ y`.
    pub fn tr_mul_vec_acc(&self, y: &[f64], out: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[j] += v * yi;
            }
        }
    }

    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        self.tr_mul_vec_acc(y, &mut out);
        out
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.ncols);
        let mut b = SparseBuilder::new(self.ncols);
        for m in [self, other] {
            for i in 0..m.nrows {
                let (c, v) = m.row(i);
                b.push_row(c.iter().copied().zip(v.iter().copied()));
            }
        }
        b.finish()
    }

    /// Multiplies row `i` by `scale[i]`.
    pub fn scale_rows(&mut self, scale: &[f64]) {
        for (i, &s) in scale.iter().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            self.values[a..b].iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn row_inf_norm(&self, i: usize) -> f64 {
        self.row(i).1.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Number of stored entries per column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.ncols];
        for &j in &self.col_idx {
            counts[j] += 1;
        }
        counts
    }

    /// Row indices touching each column.
    pub fn column_rows(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for &j in self.row(i).0 {
                out[j].push(i);
            }
        }
        out
    }
}

/// Row-by-row CSR assembly with columns given in ascending order.
pub struct SparseBuilder {
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseBuilder {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row; zero entries are skipped.
    pub fn push_row(&mut self, entries: impl Iterator<Item = (usize, f64)>) {
        for (j, v) in entries {
            debug_assert!(j < self.ncols);
            if v != 0.0 {
                self.col_idx.push(j);
                self.values.push(v);
            }
        }
        self.row_ptr.push(self.col_idx.len());
    }

    pub fn finish(self) -> SparseMatrix {
        SparseMatrix {
            nrows: self.row_ptr.len() - 1,
            ncols: self.ncols,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            values: self.values,
        }
    }
}
