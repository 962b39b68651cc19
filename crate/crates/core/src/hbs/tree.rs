//! Spatial cluster trees over interface nodes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Binary,
    Quad,
}

impl Arity {
    pub fn children(self) -> usize {
        match self {
            Arity::Binary => 2,
            Arity::Quad => 4,
        }
    }

    /// Oversampling multiplier in `s = alpha k + 10`.
    pub fn alpha(self) -> usize {
        match self {
            Arity::Binary => 3,
            Arity::Quad => 5,
        }
    }

    /// Default leaf size for rank `k`.
    pub fn default_leaf(self, k: usize) -> usize {
        self.children() * k
    }
}

impl std::str::FromStr for Arity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "2" => Ok(Arity::Binary),
            "quad" | "4" => Ok(Arity::Quad),
            other => Err(Error::invalid(format!("unknown tree arity '{other}' (binary|quad)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    /// Level, the root is level 1.
    pub level: usize,
    /// Original indices owned by the subtree, in tree order.
    pub indices: Vec<usize>,
    pub children: Vec<usize>,
    /// Bounding box `[lo, hi]` per interface axis.
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Cluster tree stored in postorder; the root is the last node.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    nodes: Vec<TreeNode>,
    arity: Arity,
    n: usize,
}

impl ClusterTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|t| t.level).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|t| t.is_leaf())
    }

    /// Nodes at `level`, in tree order.
    pub fn level(&self, level: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_level(self.root(), level, &mut out);
        out
    }

    fn collect_level(&self, t: usize, level: usize, out: &mut Vec<usize>) {
        let node = &self.nodes[t];
        if node.level == level {
            out.push(t);
        } else {
            for &c in &node.children {
                self.collect_level(c, level, out);
            }
        }
    }
}

/// Midpoint bisection of the bounding box: `Binary` halves the longest
/// axis, `Quad` halves both axes of a 2D interface. Nodes with more than
/// `leaf_size` points are split; points on a midpoint go to the upper half.
pub fn build_tree(points: &[[f64; 2]], interface_dim: usize, arity: Arity, leaf_size: usize) -> Result<ClusterTree> {
    if points.is_empty() {
        return Err(Error::invalid("cannot build a cluster tree without points"));
    }
    if leaf_size == 0 {
        return Err(Error::invalid("leaf size must be positive"));
    }
    if interface_dim > 2 {
        return Err(Error::invalid("interfaces have at most two dimensions"));
    }
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    for d in 0..interface_dim {
        lo[d] = points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
        hi[d] = points.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
    }
    let mut nodes = Vec::new();
    let all: Vec<usize> = (0..points.len()).collect();
    split(all, lo, hi, 1, points, interface_dim, arity, leaf_size, &mut nodes);
    Ok(ClusterTree {
        nodes,
        arity,
        n: points.len(),
    })
}

#[allow(clippy::too_many_arguments)]
fn split(
    idx: Vec<usize>,
    lo: [f64; 2],
    hi: [f64; 2],
    level: usize,
    points: &[[f64; 2]],
    dim: usize,
    arity: Arity,
    leaf_size: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let axes: Vec<usize> = match (arity, dim) {
        (_, 0) => Vec::new(),
        (Arity::Quad, 2) => vec![0, 1],
        _ => {
            let d = if dim == 2 && hi[1] - lo[1] > hi[0] - lo[0] { 1 } else { 0 };
            vec![d]
        }
    };
    let mut children = Vec::new();
    let mut indices = Vec::new();
    if idx.len() > leaf_size && !axes.is_empty() {
        let mid: Vec<f64> = axes.iter().map(|&d| 0.5 * (lo[d] + hi[d])).collect();
        let parts = 1usize << axes.len();
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); parts];
        for &i in &idx {
            let mut b = 0;
            for (k, &d) in axes.iter().enumerate() {
                if points[i][d] >= mid[k] {
                    b |= 1 << k;
                }
            }
            buckets[b].push(i);
        }
        // refuse degenerate splits (all points coincide)
        if buckets.iter().filter(|b| !b.is_empty()).count() > 1 {
            // children ordered with the first axis slowest
            let order: Vec<usize> = if axes.len() == 2 { vec![0, 2, 1, 3] } else { vec![0, 1] };
            for b in order {
                let part = std::mem::take(&mut buckets[b]);
                if part.is_empty() {
                    continue;
                }
                let (mut clo, mut chi) = (lo, hi);
                for (k, &d) in axes.iter().enumerate() {
                    if b & (1 << k) != 0 {
                        clo[d] = mid[k];
                    } else {
                        chi[d] = mid[k];
                    }
                }
                let c = split(part, clo, chi, level + 1, points, dim, arity, leaf_size, nodes);
                indices.extend_from_slice(&nodes[c].indices.clone());
                children.push(c);
            }
        }
    }
    if children.is_empty() {
        indices = idx;
    }
    nodes.push(TreeNode {
        level,
        indices,
        children,
        lo,
        hi,
    });
    nodes.len() - 1
}
