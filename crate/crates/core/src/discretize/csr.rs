//! Compressed sparse row storage.

use faer::Mat;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows: 0,
            ncols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
        .with_capacity_rows(nrows)
    }

    fn with_capacity_rows(mut self, nrows: usize) -> Self {
        self.row_ptr.reserve(nrows);
        self
    }

    /// Appends a row; entries must have distinct, in-range columns.
    pub fn push_row(&mut self, mut entries: Vec<(usize, f64)>) {
        entries.sort_unstable_by_key(|e| e.0);
        for (c, v) in entries {
            debug_assert!(c < self.ncols);
            match self.col_idx.last() {
                Some(&last) if last == c && self.col_idx.len() > *self.row_ptr.last().unwrap() => {
                    *self.vals.last_mut().unwrap() += v;
                }
                _ => {
                    self.col_idx.push(c);
                    self.vals.push(v);
                }
            }
        }
        self.row_ptr.push(self.col_idx.len());
        self.nrows += 1;
    }

    pub fn from_dense(a: &Mat<f64>) -> Self {
        let mut m = Csr::new(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            let row = (0..a.ncols())
                .filter(|&j| a[(i, j)] != 0.0)
                .map(|j| (j, a[(i, j)]))
                .collect();
            m.push_row(row);
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
        self.vals.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                context: "sparse matvec",
                expected: self.ncols,
                got: x.len(),
            });
        }
        Ok((0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect())
    }

    /// `A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                context: "sparse transpose matvec",
                expected: self.nrows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += a * xi;
            }
        }
        Ok(y)
    }

    /// `A X` for a dense block `X`.
    pub fn mul_dense(&self, x: &Mat<f64>) -> Mat<f64> {
        assert_eq!(x.nrows(), self.ncols, "sparse-dense product shape");
        let mut y = Mat::<f64>::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.col(c);
            for i in 0..self.nrows {
                let (cols, vals) = self.row(i);
                y[(i, c)] = cols.iter().zip(vals).map(|(&j, &a)| a * xc[j]).sum();
            }
        }
        y
    }

    /// `A^T X` for a dense block `X`.
    pub fn mul_dense_transpose(&self, x: &Mat<f64>) -> Mat<f64> {
        assert_eq!(x.nrows(), self.nrows, "sparse-dense transpose product shape");
        let mut y = Mat::<f64>::zeros(self.ncols, x.ncols());
        for c in 0..x.ncols() {
            for i in 0..self.nrows {
                let xi = x[(i, c)];
                if xi == 0.0 {
                    continue;
                }
                let (cols, vals) = self.row(i);
                for (&j, &a) in cols.iter().zip(vals) {
                    y[(j, c)] += a * xi;
                }
            }
        }
        y
    }

    /// Extracts `A(rows, cols)`; `cols` must be duplicate-free.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Csr {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let mut out = Csr::new(rows.len(), cols.len());
        for &r in rows {
            let (c, v) = self.row(r);
            let entries = c
                .iter()
                .zip(v)
                .filter(|(j, _)| map[**j] != usize::MAX)
                .map(|(&j, &a)| (map[j], a))
                .collect();
            out.push_row(entries);
        }
        out
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                col_idx[next[j]] = i;
                vals[next[j]] = a;
                next[j] += 1;
            }
        }
        Csr {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr: counts,
            col_idx,
            vals,
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut a = Mat::<f64>::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                a[(i, j)] = x;
            }
        }
        a
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
