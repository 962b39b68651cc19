//! Geometric nested dissection on node coordinates.
//!
//! A cut at `c` along an axis splits the nodes into `x < c` and `x >= c`;
//! the separator is every node on the right whose neighbour set reaches
//! the left. Among a few candidate cuts near the median the smallest
//! separator wins.

use crate::discretize::Csr;

/// Subsets below this size are eliminated as one dense front.
pub const LEAF_SIZE: usize = 96;
const MAX_CANDIDATES: usize = 32;

/// Symmetrized adjacency (diagonal excluded) of a square sparse matrix.
pub fn symmetric_adjacency(a: &Csr) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in a.row(i).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Node of the dissection tree, in postorder.
#[derive(Debug, Clone)]
pub struct DissectionNode {
    pub pivots: Vec<usize>,
    pub children: Vec<usize>,
}

/// Returns the dissection tree in postorder (children before parents).
pub fn nested_dissection(adj: &[Vec<usize>], coords: &[[f64; 3]], dim: usize) -> Vec<DissectionNode> {
    let n = adj.len();
    let mut out = Vec::new();
    let mut member = vec![false; n];
    let all: Vec<usize> = (0..n).collect();
    if n > 0 {
        dissect(all, adj, coords, dim, &mut member, &mut out);
    }
    out
}

fn dissect(
    nodes: Vec<usize>,
    adj: &[Vec<usize>],
    coords: &[[f64; 3]],
    dim: usize,
    member: &mut [bool],
    out: &mut Vec<DissectionNode>,
) -> usize {
    if nodes.len() <= LEAF_SIZE {
        return push_leaf(nodes, out);
    }
    for &v in &nodes {
        member[v] = true;
    }
    let split = best_split(&nodes, adj, coords, dim, member);
    for &v in &nodes {
        member[v] = false;
    }
    let Some((left, right, sep)) = split else {
        return push_leaf(nodes, out);
    };
    let mut children = Vec::with_capacity(2);
    for part in [left, right] {
        if !part.is_empty() {
            children.push(dissect(part, adj, coords, dim, member, out));
        }
    }
    let mut pivots = sep;
    pivots.sort_unstable();
    out.push(DissectionNode { pivots, children });
    out.len() - 1
}

fn push_leaf(mut nodes: Vec<usize>, out: &mut Vec<DissectionNode>) -> usize {
    nodes.sort_unstable();
    out.push(DissectionNode {
        pivots: nodes,
        children: Vec::new(),
    });
    out.len() - 1
}

type Split = (Vec<usize>, Vec<usize>, Vec<usize>);

fn best_split(
    nodes: &[usize],
    adj: &[Vec<usize>],
    coords: &[[f64; 3]],
    dim: usize,
    member: &[bool],
) -> Option<Split> {
    let extent = |d: usize| {
        let (lo, hi) = nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(coords[v][d]), hi.max(coords[v][d]))
        });
        hi - lo
    };
    let mut axes: Vec<usize> = (0..dim).collect();
    axes.sort_by(|&a, &b| extent(b).total_cmp(&extent(a)));
    for axis in axes {
        if let Some(s) = split_along(nodes, adj, coords, axis, member) {
            return Some(s);
        }
    }
    None
}

fn split_along(
    nodes: &[usize],
    adj: &[Vec<usize>],
    coords: &[[f64; 3]],
    axis: usize,
    member: &[bool],
) -> Option<Split> {
    let x = |v: usize| coords[v][axis];
    let mut values: Vec<f64> = nodes.iter().map(|&v| x(v)).collect();
    values.sort_by(f64::total_cmp);
    let median = values[values.len() / 2];
    let (lo_q, hi_q) = (values[values.len() * 3 / 10], values[values.len() * 7 / 10]);
    values.dedup();
    let window: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&c| c >= lo_q && c <= hi_q && c > values[0])
        .collect();
    if window.is_empty() {
        return None;
    }
    let candidates: Vec<f64> = if window.len() <= MAX_CANDIDATES {
        window
    } else {
        (0..MAX_CANDIDATES)
            .map(|i| window[i * (window.len() - 1) / (MAX_CANDIDATES - 1)])
            .collect()
    };

    // v joins the separator of cut c iff reach[v] < c <= x(v).
    let reach: Vec<f64> = nodes
        .iter()
        .map(|&v| {
            adj[v]
                .iter()
                .filter(|&&u| member[u])
                .map(|&u| x(u))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut best: Option<(usize, f64, f64)> = None;
    for &c in &candidates {
        let size = nodes
            .iter()
            .zip(&reach)
            .filter(|(&v, &r)| r < c && c <= x(v))
            .count();
        let dist = (c - median).abs();
        let better = match best {
            None => true,
            Some((bs, bd, _)) => size < bs || (size == bs && dist < bd),
        };
        if better {
            best = Some((size, dist, c));
        }
    }
    let (_, _, c) = best?;
    let (mut left, mut right, mut sep) = (Vec::new(), Vec::new(), Vec::new());
    for (&v, &r) in nodes.iter().zip(&reach) {
        if x(v) < c {
            left.push(v);
        } else if r < c {
            sep.push(v);
        } else {
            right.push(v);
        }
    }
    if left.is_empty() || left.len() == nodes.len() {
        return None;
    }
    Some((left, right, sep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_fd, assemble_hps, Region};
    use crate::problem::make_helmholtz;

    fn interior_graph(sys: &crate::discretize::SparseSystem) -> (Vec<Vec<usize>>, Vec<[f64; 3]>) {
        let idx = sys.interior();
        let a = sys.block(idx, idx);
        let coords = idx.iter().map(|&d| sys.point(d)).collect();
        (symmetric_adjacency(&a), coords)
    }

    fn check_separation(tree: &[DissectionNode], adj: &[Vec<usize>]) {
        let n = adj.len();
        let mut owner = vec![usize::MAX; n];
        for (t, node) in tree.iter().enumerate() {
            for &v in &node.pivots {
                assert_eq!(owner[v], usize::MAX, "node {v} appears twice");
                owner[v] = t;
            }
        }
        assert!(owner.iter().all(|&o| o != usize::MAX), "nodes missing");
        // an edge may only join a front to itself or to an ancestor
        let mut parent = vec![usize::MAX; tree.len()];
        for (t, node) in tree.iter().enumerate() {
            for &c in &node.children {
                assert!(c < t, "postorder violated");
                parent[c] = t;
            }
        }
        let is_ancestor = |mut a: usize, b: usize| {
            while a != usize::MAX {
                if a == b {
                    return true;
                }
                a = parent[a];
            }
            false
        };
        for v in 0..n {
            for &u in &adj[v] {
                let (a, b) = (owner[v], owner[u]);
                assert!(is_ancestor(a, b) || is_ancestor(b, a), "edge {v}-{u} crosses subtrees");
            }
        }
    }

    #[test]
    fn fd_grid_dissection_separates() {
        let op = make_helmholtz(0.0, 2).unwrap();
        let sys = assemble_fd(&op, &Region::unit(2), 1.0 / 40.0).unwrap();
        let (adj, coords) = interior_graph(&sys);
        let tree = nested_dissection(&adj, &coords, 2);
        check_separation(&tree, &adj);
        // top separator of a 39x39 grid is one grid line
        assert_eq!(tree.last().unwrap().pivots.len(), 39);
    }

    #[test]
    fn hps_dissection_separates() {
        let op = make_helmholtz(0.0, 2).unwrap();
        let sys = assemble_hps(&op, &Region::new(&[0.0, 0.0], &[0.5, 1.0]).unwrap(), &[2, 8], 8).unwrap();
        let (adj, coords) = interior_graph(&sys);
        let tree = nested_dissection(&adj, &coords, 2);
        check_separation(&tree, &adj);
        let op3 = make_helmholtz(1.0, 3).unwrap();
        let sys3 = assemble_fd(&op3, &Region::new(&[0.0; 3], &[0.25, 1.0, 1.0]).unwrap(), 1.0 / 16.0).unwrap();
        let (adj3, coords3) = interior_graph(&sys3);
        check_separation(&nested_dissection(&adj3, &coords3, 3), &adj3);
    }
}
