//! Hierarchically block-separable matrices built from matrix-vector products.
//!
//! A compressed matrix is stored as a telescoping factorization over a
//! cluster tree: every non-root node holds bases `U`, `V` and a diagonal
//! block `D` expressed in the reduced coordinates of its children.

mod compress;
mod tree;

pub use compress::{compress, sample_count};
pub use tree::{build_tree, Arity, ClusterTree, TreeNode};

use crate::dense::select_rows;
use crate::error::{Error, Result};
use faer::{Mat, MatRef};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbsConfig {
    /// Fixed rank of every off-diagonal basis.
    pub k: usize,
    pub arity: Arity,
    /// Maximum points per leaf; `None` picks `arity.default_leaf(k)`.
    pub leaf_size: Option<usize>,
    pub seed: u64,
    /// Oversampling multiplier; `None` uses `arity.alpha()`.
    pub alpha: Option<usize>,
}

impl HbsConfig {
    pub fn new(k: usize, arity: Arity, seed: u64) -> Self {
        HbsConfig {
            k,
            arity,
            leaf_size: None,
            seed,
            alpha: None,
        }
    }

    pub fn leaf(&self) -> usize {
        self.leaf_size.unwrap_or_else(|| self.arity.default_leaf(self.k))
    }

    pub fn samples(&self) -> usize {
        sample_count(self.k, self.alpha.unwrap_or_else(|| self.arity.alpha()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("HBS rank k must be positive"));
        }
        if self.leaf() <= self.k {
            return Err(Error::invalid(format!(
                "HBS leaf size {} must exceed the rank k = {}",
                self.leaf(),
                self.k
            )));
        }
        Ok(())
    }
}

/// Per-node generators. `None` bases stand for the identity.
#[derive(Debug, Clone)]
pub(crate) struct HbsNode {
    pub u: Option<Mat<f64>>,
    pub v: Option<Mat<f64>>,
    pub d: Option<Mat<f64>>,
    /// Rows of the node's reduced block.
    pub m: usize,
    /// Columns of `U` (equal to `m` for identity bases).
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageReport {
    pub n: usize,
    pub stored: usize,
    /// Stored reals divided by `n^2`.
    pub rate: f64,
    pub depth: usize,
}

#[derive(Debug, Clone)]
pub struct HbsMatrix {
    pub(crate) tree: ClusterTree,
    pub(crate) nodes: Vec<HbsNode>,
}

impl HbsMatrix {
    pub fn n(&self) -> usize {
        self.tree.n()
    }

    pub fn tree(&self) -> &ClusterTree {
        &self.tree
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let y = self.apply(crate::dense::vec_to_col(x).as_ref());
        crate::dense::col_to_vec(y.as_ref(), 0)
    }

    pub fn matvec_adjoint(&self, x: &[f64]) -> Vec<f64> {
        let y = self.apply_adjoint(crate::dense::vec_to_col(x).as_ref());
        crate::dense::col_to_vec(y.as_ref(), 0)
    }

    pub fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        self.telescope(x, false)
    }

    pub fn apply_adjoint(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        self.telescope(x, true)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        self.apply(Mat::<f64>::identity(self.n(), self.n()).as_ref())
    }

    pub fn storage_report(&self) -> StorageReport {
        let size = |m: &Option<Mat<f64>>| m.as_ref().map_or(0, |m| m.nrows() * m.ncols());
        let stored: usize = self.nodes.iter().map(|t| size(&t.u) + size(&t.v) + size(&t.d)).sum();
        let n = self.n();
        StorageReport {
            n,
            stored,
            rate: stored as f64 / (n as f64 * n as f64),
            depth: self.tree.depth(),
        }
    }

    fn telescope(&self, x: MatRef<'_, f64>, adjoint: bool) -> Mat<f64> {
        assert_eq!(x.nrows(), self.n(), "HBS apply: dimension mismatch");
        let r = x.ncols();
        let tnodes = self.tree.nodes();
        let mut xhat: Vec<Mat<f64>> = Vec::with_capacity(tnodes.len());
        let mut xred: Vec<Mat<f64>> = Vec::with_capacity(tnodes.len());
        for (tn, hn) in tnodes.iter().zip(&self.nodes) {
            let xh = if tn.is_leaf() {
                select_rows(x, &tn.indices)
            } else {
                vstack(tn.children.iter().map(|&c| xred[c].as_ref()), r)
            };
            let xr = match if adjoint { &hn.u } else { &hn.v } {
                Some(b) => b.transpose() * &xh,
                None => xh.clone(),
            };
            xhat.push(xh);
            xred.push(xr);
        }
        let mut z: Vec<Option<Mat<f64>>> = vec![None; tnodes.len()];
        let mut y = Mat::<f64>::zeros(self.n(), r);
        for t in (0..tnodes.len()).rev() {
            let hn = &self.nodes[t];
            let mut yh = match &hn.d {
                Some(d) if adjoint => d.transpose() * &xhat[t],
                Some(d) => d * &xhat[t],
                None => Mat::<f64>::zeros(hn.m, r),
            };
            if let Some(zt) = z[t].take() {
                match if adjoint { &hn.v } else { &hn.u } {
                    Some(b) => yh += b * &zt,
                    None => yh += &zt,
                }
            }
            let tn = &tnodes[t];
            if tn.is_leaf() {
                for (a, &i) in tn.indices.iter().enumerate() {
                    for c in 0..r {
                        y[(i, c)] = yh[(a, c)];
                    }
                }
            } else {
                let mut off = 0;
                for &c in &tn.children {
                    let rc = self.nodes[c].rank;
                    z[c] = Some(yh.as_ref().subrows(off, rc).to_owned());
                    off += rc;
                }
            }
        }
        y
    }
}

pub(crate) fn vstack<'a>(blocks: impl Iterator<Item = MatRef<'a, f64>>, ncols: usize) -> Mat<f64> {
    let blocks: Vec<MatRef<'a, f64>> = blocks.collect();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::<f64>::zeros(rows, ncols);
    let mut off = 0;
    for b in blocks {
        out.as_mut().subrows_mut(off, b.nrows()).copy_from(b);
        off += b.nrows();
    }
    out
}
