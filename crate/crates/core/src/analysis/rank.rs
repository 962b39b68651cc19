//! Numerical ranks of admissible block interactions.

use faer::MatRef;

use super::singular_values;
use crate::dense::{select_cols, select_rows};
use crate::error::{Error, Result};
use crate::hbs::ClusterTree;

/// Number of singular values above `tol`.
pub fn numerical_rank(m: MatRef<'_, f64>, tol: f64) -> Result<usize> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    Ok(singular_values(m)?.iter().filter(|&&s| s > tol).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterRank {
    pub node: usize,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRanks {
    pub level: usize,
    pub strong: bool,
    pub clusters: Vec<ClusterRank>,
}

impl LevelRanks {
    pub fn max(&self) -> usize {
        self.clusters.iter().map(|c| c.rank).max().unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        if self.clusters.is_empty() {
            return 0.0;
        }
        self.clusters.iter().map(|c| c.rank as f64).sum::<f64>() / self.clusters.len() as f64
    }
}

fn touches(a: (&[f64; 2], &[f64; 2]), b: (&[f64; 2], &[f64; 2]), dim: usize) -> bool {
    (0..dim).all(|d| {
        let tol = 1e-12 * (a.1[d] - a.0[d]).abs().max(1.0);
        a.0[d] <= b.1[d] + tol && b.0[d] <= a.1[d] + tol
    })
}

/// Ranks of `m(I_tau, far(tau))` for every cluster `tau` at `level`.
/// Rows and columns of `m` are both indexed by the tree's points. The far
/// field is the complement of `tau` (weak admissibility) or the
/// complement of `tau` and every cluster whose box touches it (strong).
/// Singular values count when larger than `tol`.
pub fn admissible_ranks(
    m: MatRef<'_, f64>,
    tree: &ClusterTree,
    interface_dim: usize,
    level: usize,
    strong: bool,
    tol: f64,
) -> Result<LevelRanks> {
    if m.nrows() != tree.n() || m.ncols() != tree.n() {
        return Err(Error::DimensionMismatch {
            context: "rank study block vs cluster tree",
            expected: tree.n(),
            got: m.nrows(),
        });
    }
    let nodes = tree.nodes();
    let at_level = tree.level(level);
    if at_level.is_empty() {
        return Err(Error::invalid(format!("cluster tree has no level {level}")));
    }
    let mut clusters = Vec::with_capacity(at_level.len());
    for &t in &at_level {
        let node = &nodes[t];
        let mut near = vec![false; tree.n()];
        for &i in &node.indices {
            near[i] = true;
        }
        if strong {
            for &u in &at_level {
                let other = &nodes[u];
                if touches((&node.lo, &node.hi), (&other.lo, &other.hi), interface_dim) {
                    for &i in &other.indices {
                        near[i] = true;
                    }
                }
            }
        }
        let far: Vec<usize> = (0..tree.n()).filter(|&i| !near[i]).collect();
        let block = select_cols(select_rows(m, &node.indices).as_ref(), &far);
        clusters.push(ClusterRank {
            node: t,
            rows: node.indices.len(),
            cols: far.len(),
            rank: numerical_rank(block.as_ref(), tol)?,
        });
    }
    Ok(LevelRanks { level, strong, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hbs::{build_tree, Arity};
    use faer::Mat;

    fn grid(n: usize) -> Vec<[f64; 2]> {
        (0..n * n).map(|i| [(i / n) as f64 + 0.5, (i % n) as f64 + 0.5]).collect()
    }

    #[test]
    fn identity_has_zero_far_field_rank() {
        let pts = grid(8);
        let tree = build_tree(&pts, 2, Arity::Quad, 4).unwrap();
        let eye = Mat::<f64>::identity(64, 64);
        for strong in [false, true] {
            let r = admissible_ranks(eye.as_ref(), &tree, 2, 2, strong, 1e-5).unwrap();
            assert_eq!(r.max(), 0);
            assert_eq!(r.clusters.len(), 4);
        }
    }

    #[test]
    fn strong_ranks_do_not_exceed_weak_ranks() {
        let pts = grid(16);
        let m = Mat::from_fn(256, 256, |i, j| {
            let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            1.0 / (1.0 + d)
        });
        let tree = build_tree(&pts, 2, Arity::Quad, 16).unwrap();
        for level in [2, 3] {
            let weak = admissible_ranks(m.as_ref(), &tree, 2, level, false, 1e-5).unwrap();
            let strong = admissible_ranks(m.as_ref(), &tree, 2, level, true, 1e-5).unwrap();
            for (w, s) in weak.clusters.iter().zip(&strong.clusters) {
                assert!(s.rank <= w.rank);
                assert!(s.cols < w.cols);
            }
        }
        // a looser tolerance never increases the rank
        let tight = admissible_ranks(m.as_ref(), &tree, 2, 3, false, 1e-8).unwrap();
        let loose = admissible_ranks(m.as_ref(), &tree, 2, 3, false, 1e-3).unwrap();
        assert!(loose.max() <= tight.max());
    }
}
