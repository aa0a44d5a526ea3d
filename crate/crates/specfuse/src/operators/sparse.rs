//! Row-major compressed sparse matrix with the few operations the fusion
//! problem needs: products, transpose products, vertical stacking, and a
//! triplet export for external verification.

use std::io::Write;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseProjection {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseProjection {
    /// Builds from per-row (column, value) entry lists. Columns must be
    /// strictly increasing within each row and below `cols`.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::Dimension(
                "sparse matrix needs a positive column count".into(),
            ));
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (r, entries) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(c, v) in entries {
                if c >= cols {
                    return Err(Error::Dimension(format!(
                        "row {}: column {} out of range (cols = {cols})",
                        r + 1,
                        c + 1
                    )));
                }
                if let Some(p) = prev {
                    if c <= p {
                        return Err(Error::Dimension(format!(
                            "row {}: column indices must strictly increase",
                            r + 1
                        )));
                    }
                }
                prev = Some(c);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseProjection {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// y = A x.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "apply: vector length {} does not match cols {}",
                x.len(),
                self.cols
            )));
        }
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
        Ok(y)
    }

    /// x = A' v.
    pub fn apply_adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::Dimension(format!(
                "apply_adjoint: vector length {} does not match rows {}",
                v.len(),
                self.rows
            )));
        }
        let mut x = vec![0.0; self.cols];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let vr = v[r];
            for (c, w) in cols.iter().zip(vals) {
                x[*c] += w * vr;
            }
        }
        Ok(x)
    }

    /// Vertical stack: `top` above `bottom`.
    pub fn vstack(top: &SparseProjection, bottom: &SparseProjection) -> Result<SparseProjection> {
        if top.cols != bottom.cols {
            return Err(Error::Dimension(format!(
                "vstack: column counts differ ({} vs {})",
                top.cols, bottom.cols
            )));
        }
        let mut row_ptr = top.row_ptr.clone();
        let base = top.nnz();
        row_ptr.extend(bottom.row_ptr.iter().skip(1).map(|&p| p + base));
        let mut col_idx = top.col_idx.clone();
        col_idx.extend_from_slice(&bottom.col_idx);
        let mut values = top.values.clone();
        values.extend_from_slice(&bottom.values);
        Ok(SparseProjection {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Writes 1-based tab-separated (row, col, value) triplets.
    pub fn write_triplets(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(out, "{}\t{}\t{}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}
