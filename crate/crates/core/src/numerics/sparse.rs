use crate::error::{Error, Result};

/// Compressed sparse row matrix with `f64` weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != n_rows + 1
            || indices.len() != values.len()
            || indptr.last() != Some(&indices.len())
            || indptr.windows(2).any(|w| w[0] > w[1])
            || indices.iter().any(|&c| c >= n_cols)
        {
            return Err(Error::Invalid("malformed CSR arrays".into()));
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// True when every row holds exactly one unit weight on the diagonal.
    pub fn is_identity(&self) -> bool {
        self.n_rows == self.n_cols
            && self.nnz() == self.n_rows
            && self.indices.iter().enumerate().all(|(i, &c)| c == i)
            && self.values.iter().all(|&v| v == 1.0)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, weight)` pairs of row `r`, ordered by column.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, w)| w)
    }

    /// `self · x` for a dense row-major `x` with `cols` columns.
    pub fn mul_dense(&self, x: &[f64], cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * cols];
        for r in 0..self.n_rows {
            let dst = &mut out[r * cols..(r + 1) * cols];
            for (c, w) in self.row(r) {
                let src = &x[c * cols..(c + 1) * cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// `selfᵀ · g` for a dense row-major `g` with `cols` columns.
    pub fn mul_dense_transposed(&self, g: &[f64], cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols * cols];
        for r in 0..self.n_rows {
            let src = &g[r * cols..(r + 1) * cols];
            for (c, w) in self.row(r) {
                let dst = &mut out[c * cols..(c + 1) * cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n_rows {
            for (c, w) in self.row(r) {
                worst = worst.max((w - self.get(c, r)).abs());
            }
        }
        worst
    }
}
