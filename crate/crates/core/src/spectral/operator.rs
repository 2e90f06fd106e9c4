use crate::{Error, Result};
use rayon::prelude::*;
use std::io::Write;

/// A nonnegative linear map on cell-mass vectors.
pub trait TraceOperator: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = A x`, overwriting `y`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
    /// `y = A^T x`, overwriting `y`.
    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]);
    /// Visits every stored entry `(row, col, value)`.
    fn for_each_entry(&self, f: &mut dyn FnMut(usize, usize, f64));
    /// Number of entries `for_each_entry` visits.
    fn nnz(&self) -> usize;

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows()];
        self.apply_into(x, &mut y);
        y
    }

    fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols()];
        self.apply_transpose_into(x, &mut y);
        y
    }

    fn column_sums(&self) -> Vec<f64> {
        self.apply_transpose(&vec![1.0; self.rows()])
    }

    /// Largest deviation of a column sum from one.
    fn stochastic_defect(&self) -> f64 {
        self.column_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    fn is_stochastic(&self, tol: f64) -> bool {
        self.stochastic_defect() <= tol
    }
}

/// Compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from triplets; duplicates are summed in input order.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if let Some(t) = triplets.iter().find(|t| t.0 >= rows || t.1 >= cols) {
            return Err(Error::GridMismatch(format!("entry ({}, {}) outside {rows}x{cols}", t.0, t.1)));
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1, i));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for i in order {
            let (r, c, v) = triplets[i];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseMatrix { rows, cols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Rescales every column to sum to one; empty columns are left empty.
    pub fn normalize_columns(&mut self) {
        let mut sums = vec![0.0; self.cols];
        for (c, v) in self.col_idx.iter().zip(&self.values) {
            sums[*c] += v;
        }
        for (c, v) in self.col_idx.iter().zip(self.values.iter_mut()) {
            if sums[*c] > 0.0 {
                *v /= sums[*c];
            }
        }
    }

    /// Largest entry per column.
    pub fn column_max(&self) -> Vec<f64> {
        let mut m = vec![0.0f64; self.cols];
        for (c, v) in self.col_idx.iter().zip(&self.values) {
            m[*c] = m[*c].max(*v);
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .filter(|(cc, _)| **cc == c)
            .map(|(_, v)| *v)
            .sum()
    }
}

const ROW_CHUNK: usize = 1024;

impl TraceOperator for SparseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(k, chunk)| {
            for (i, yi) in chunk.iter_mut().enumerate() {
                let r = k * ROW_CHUNK + i;
                let span = self.row_ptr[r]..self.row_ptr[r + 1];
                *yi = self.col_idx[span.clone()].iter().zip(&self.values[span]).map(|(c, v)| v * x[*c]).sum();
            }
        });
    }

    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, xr) in x.iter().enumerate().take(self.rows) {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }

    fn for_each_entry(&self, f: &mut dyn FnMut(usize, usize, f64)) {
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                f(r, self.col_idx[k], self.values[k]);
            }
        }
    }

    fn nnz(&self) -> usize {
        self.values.len()
    }
}

/// `A B`, applied without forming the product.
pub struct Composed<'a> {
    pub a: &'a dyn TraceOperator,
    pub b: &'a dyn TraceOperator,
}

impl<'a> Composed<'a> {
    pub fn new(a: &'a dyn TraceOperator, b: &'a dyn TraceOperator) -> Result<Self> {
        if a.cols() != b.rows() {
            return Err(Error::GridMismatch(format!("cannot compose {} columns with {} rows", a.cols(), b.rows())));
        }
        Ok(Composed { a, b })
    }
}

impl TraceOperator for Composed<'_> {
    fn rows(&self) -> usize {
        self.a.rows()
    }

    fn cols(&self) -> usize {
        self.b.cols()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let mut t = vec![0.0; self.b.rows()];
        self.b.apply_into(x, &mut t);
        self.a.apply_into(&t, y);
    }

    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        let mut t = vec![0.0; self.a.cols()];
        self.a.apply_transpose_into(x, &mut t);
        self.b.apply_transpose_into(&t, y);
    }

    fn for_each_entry(&self, _f: &mut dyn FnMut(usize, usize, f64)) {}

    fn nnz(&self) -> usize {
        0
    }
}

/// Writes an operator as a coordinate-format text file: a header line
/// `rows cols nnz`, then one `row col value` line per entry (0-based).
pub fn write_coo<W: Write>(op: &dyn TraceOperator, out: &mut W, max_nnz: usize) -> Result<bool> {
    if op.nnz() == 0 || op.nnz() > max_nnz {
        return Ok(false);
    }
    let mut nnz = 0usize;
    op.for_each_entry(&mut |_, _, _| nnz += 1);
    let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
    writeln!(out, "{} {} {}", op.rows(), op.cols(), nnz).map_err(io)?;
    let mut err = None;
    op.for_each_entry(&mut |r, c, v| {
        if err.is_none() {
            if let Err(e) = writeln!(out, "{r} {c} {v:e}") {
                err = Some(e);
            }
        }
    });
    match err {
        Some(e) => Err(io(e)),
        None => Ok(true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_and_transpose() {
        let m = SparseMatrix::from_triplets(2, 3, &[(0, 0, 0.5), (1, 0, 0.5), (0, 1, 1.0), (1, 2, 0.25), (1, 2, 0.75)]).unwrap();
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(1, 2), 1.0);
        assert_eq!(m.apply(&[1.0, 2.0, 3.0]), vec![2.5, 3.5]);
        assert_eq!(m.column_sums(), vec![1.0, 1.0, 1.0]);
        assert!(m.is_stochastic(1e-15));
        let id = SparseMatrix::identity(3);
        let c = Composed::new(&m, &id).unwrap();
        assert_eq!(c.apply(&[1.0, 0.0, 0.0]), vec![0.5, 0.5]);
        let mut buf = Vec::new();
        assert!(write_coo(&m, &mut buf, 10).unwrap());
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("2 3 4\n"));
        assert!(!write_coo(&m, &mut Vec::new(), 3).unwrap());
    }
}
