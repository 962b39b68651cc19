//! Multifrontal sparse LU with a geometric nested-dissection ordering.
//!
//! Each front eliminates the pivot set of one dissection node against its
//! boundary set (the later-eliminated nodes it couples to, directly or
//! through its descendants). Row interchanges stay inside the pivot block
//! and only happen when a diagonal entry is tiny relative to its column, so
//! the factorization is `Π A = L U` with a block-local permutation `Π`.

pub mod ordering;

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_unit_lower_triangular_in_place,
    solve_unit_upper_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Accum, Mat, MatMut, MatRef, Par};

use crate::discretize::{Csr, SparseSystem};
use crate::error::{Error, Result};
use crate::problem::BoundaryData;
use crate::timing::Stopwatch;

/// Relative size below which a diagonal entry triggers a row interchange.
const PIVOT_THRESHOLD: f64 = 1e-12;
/// Pivots at or below this multiple of `max |a_ij|` are treated as zero.
const SINGULAR_THRESHOLD: f64 = 1e-12;
const PANEL: usize = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FactorStats {
    pub n: usize,
    /// Stored entries of `L` and `U`.
    pub factor_nnz: usize,
    pub fronts: usize,
    pub largest_front: usize,
    /// Reals held by the largest front (dense working storage).
    pub peak_front_reals: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
struct Front {
    pivots: Vec<usize>,
    boundary: Vec<usize>,
    #[cfg_attr(not(test), allow(dead_code))]
    children: Vec<usize>,
    /// Factor row `i` is the original pivot row `pivots[perm[i]]`.
    perm: Vec<usize>,
    /// Packed unit-lower `L11` and upper `U11`.
    lu: Mat<f64>,
    u12: Mat<f64>,
    l21: Mat<f64>,
}

/// `Π A = L U` for a square sparse matrix.
#[derive(Debug, Clone)]
pub struct InteriorFactorization {
    n: usize,
    fronts: Vec<Front>,
    stats: FactorStats,
}

/// Factorizes the interior block `A(I, I)` of a local system.
pub fn factorize(system: &SparseSystem) -> Result<InteriorFactorization> {
    let idx = system.interior();
    let a = system.block(idx, idx);
    let coords: Vec<[f64; 3]> = idx.iter().map(|&d| system.point(d)).collect();
    factorize_matrix(&a, &coords, system.dim())
}

/// Factorizes `a`, ordering unknowns by the geometry in `coords`.
pub fn factorize_matrix(a: &Csr, coords: &[[f64; 3]], dim: usize) -> Result<InteriorFactorization> {
    let sw = Stopwatch::start();
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "factorize: square matrix",
            expected: n,
            got: a.ncols(),
        });
    }
    if coords.len() != n {
        return Err(Error::DimensionMismatch {
            context: "factorize: coordinates",
            expected: n,
            got: coords.len(),
        });
    }
    let adj = ordering::symmetric_adjacency(a);
    let tree = ordering::nested_dissection(&adj, coords, dim);

    // elimination position of every unknown
    let mut pos = vec![0usize; n];
    let mut first = Vec::with_capacity(tree.len());
    let mut next = 0;
    for node in &tree {
        first.push(next);
        for &v in &node.pivots {
            pos[v] = next;
            next += 1;
        }
    }

    // symbolic: boundary sets
    let mut boundaries: Vec<Vec<usize>> = Vec::with_capacity(tree.len());
    let mut mark = vec![usize::MAX; n];
    for (t, node) in tree.iter().enumerate() {
        let end = first[t] + node.pivots.len();
        let mut b = Vec::new();
        let mut visit = |u: usize, b: &mut Vec<usize>| {
            if pos[u] >= end && mark[u] != t {
                mark[u] = t;
                b.push(u);
            }
        };
        for &v in &node.pivots {
            for &u in &adj[v] {
                visit(u, &mut b);
            }
        }
        for &c in &node.children {
            for &u in &boundaries[c] {
                visit(u, &mut b);
            }
        }
        b.sort_unstable_by_key(|&u| pos[u]);
        boundaries.push(b);
    }

    let at = a.transpose();
    let scale = a.max_abs();
    let mut local = vec![usize::MAX; n];
    let mut updates: Vec<Option<Mat<f64>>> = vec![None; tree.len()];
    let mut fronts = Vec::with_capacity(tree.len());
    let mut stats = FactorStats {
        n,
        fronts: tree.len(),
        ..Default::default()
    };
    for (t, node) in tree.into_iter().enumerate() {
        let boundary = std::mem::take(&mut boundaries[t]);
        let np = node.pivots.len();
        let m = np + boundary.len();
        for (k, &v) in node.pivots.iter().chain(&boundary).enumerate() {
            local[v] = k;
        }
        let mut f = Mat::<f64>::zeros(m, m);
        let start = first[t];
        for (k, &v) in node.pivots.iter().enumerate() {
            let (cols, vals) = a.row(v);
            for (&j, &x) in cols.iter().zip(vals) {
                if pos[j] >= start {
                    f[(k, local[j])] += x;
                }
            }
            let (rows, vals) = at.row(v);
            for (&i, &x) in rows.iter().zip(vals) {
                if pos[i] >= start + np {
                    f[(local[i], k)] += x;
                }
            }
        }
        for &c in &node.children {
            let Some(upd) = updates[c].take() else { continue };
            let map: Vec<usize> = fronts_boundary(&fronts, c).iter().map(|&u| local[u]).collect();
            for (j, &lj) in map.iter().enumerate() {
                for (i, &li) in map.iter().enumerate() {
                    f[(li, lj)] += upd[(i, j)];
                }
            }
        }
        let perm = partial_lu(f.as_mut(), np, scale, start)?;
        stats.factor_nnz += np * np + 2 * np * boundary.len();
        stats.largest_front = stats.largest_front.max(m);
        stats.peak_front_reals = stats.peak_front_reals.max(m * m);
        let lu = f.as_ref().submatrix(0, 0, np, np).to_owned();
        let u12 = f.as_ref().submatrix(0, np, np, m - np).to_owned();
        let l21 = f.as_ref().submatrix(np, 0, m - np, np).to_owned();
        if m > np {
            updates[t] = Some(f.as_ref().submatrix(np, np, m - np, m - np).to_owned());
        }
        for &v in node.pivots.iter().chain(&boundary) {
            local[v] = usize::MAX;
        }
        fronts.push(Front {
            pivots: node.pivots,
            boundary,
            children: node.children,
            perm,
            lu,
            u12,
            l21,
        });
    }
    stats.seconds = sw.seconds();
    Ok(InteriorFactorization { n, fronts, stats })
}

fn fronts_boundary(fronts: &[Front], c: usize) -> &[usize] {
    &fronts[c].boundary
}

/// Blocked right-looking LU of the leading `np` columns of `f`; the
/// trailing block receives the Schur complement. Returns the local row
/// permutation.
fn partial_lu(mut f: MatMut<'_, f64>, np: usize, scale: f64, offset: usize) -> Result<Vec<usize>> {
    let m = f.nrows();
    let mut perm: Vec<usize> = (0..np).collect();
    let mut k0 = 0;
    while k0 < np {
        let w = PANEL.min(np - k0);
        let end = k0 + w;
        for j in k0..end {
            // threshold pivot search restricted to pivot rows
            let mut best = j;
            let mut colmax = 0.0f64;
            for i in j..np {
                let v = f[(i, j)].abs();
                if v > colmax {
                    colmax = v;
                    best = i;
                }
            }
            if f[(j, j)].abs() < PIVOT_THRESHOLD * colmax && best != j {
                for c in 0..m {
                    let tmp = f[(j, c)];
                    f[(j, c)] = f[(best, c)];
                    f[(best, c)] = tmp;
                }
                perm.swap(j, best);
            }
            let piv = f[(j, j)];
            if !(piv.abs() > SINGULAR_THRESHOLD * scale) {
                return Err(Error::LocalResonance {
                    pivot: piv,
                    step: offset + j,
                    scale,
                });
            }
            let inv = 1.0 / piv;
            for i in j + 1..m {
                f[(i, j)] *= inv;
            }
            for c in j + 1..end {
                let u = f[(j, c)];
                if u != 0.0 {
                    for i in j + 1..m {
                        let l = f[(i, j)];
                        f[(i, c)] -= l * u;
                    }
                }
            }
        }
        if end < m {
            let l_panel = f.as_ref().submatrix(k0, k0, w, w).to_owned();
            solve_unit_lower_triangular_in_place(
                l_panel.as_ref(),
                f.as_mut().submatrix_mut(k0, end, w, m - end),
                Par::Seq,
            );
            let left = f.as_ref().submatrix(end, k0, m - end, w).to_owned();
            let top = f.as_ref().submatrix(k0, end, w, m - end).to_owned();
            matmul(
                f.as_mut().submatrix_mut(end, end, m - end, m - end),
                Accum::Add,
                left.as_ref(),
                top.as_ref(),
                -1.0,
                Par::Seq,
            );
        }
        k0 = end;
    }
    Ok(perm)
}

fn gather(x: MatRef<'_, f64>, rows: impl Iterator<Item = usize>, len: usize) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(len, x.ncols());
    for (k, r) in rows.enumerate() {
        for c in 0..x.ncols() {
            out[(k, c)] = x[(r, c)];
        }
    }
    out
}

fn scatter(src: MatRef<'_, f64>, x: &mut Mat<f64>, rows: impl Iterator<Item = usize>) {
    for (k, r) in rows.enumerate() {
        for c in 0..src.ncols() {
            x[(r, c)] = src[(k, c)];
        }
    }
}

/// `x[rows] -= a * y`.
fn scatter_sub(a: MatRef<'_, f64>, y: MatRef<'_, f64>, x: &mut Mat<f64>, rows: &[usize]) {
    if rows.is_empty() || a.ncols() == 0 {
        return;
    }
    let prod = a * y;
    for (k, &r) in rows.iter().enumerate() {
        for c in 0..y.ncols() {
            x[(r, c)] -= prod[(k, c)];
        }
    }
}

impl InteriorFactorization {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stats(&self) -> FactorStats {
        self.stats
    }

    fn check(&self, rows: usize) -> Result<()> {
        if rows != self.n {
            return Err(Error::DimensionMismatch {
                context: "sparse solve",
                expected: self.n,
                got: rows,
            });
        }
        Ok(())
    }

    /// Solves `A X = B` for every column of `B`.
    pub fn solve_mat(&self, b: &Mat<f64>) -> Result<Mat<f64>> {
        self.check(b.nrows())?;
        let mut x = b.clone();
        for fr in &self.fronts {
            let np = fr.pivots.len();
            let mut xp = gather(x.as_ref(), fr.perm.iter().map(|&i| fr.pivots[i]), np);
            solve_unit_lower_triangular_in_place(fr.lu.as_ref(), xp.as_mut(), Par::Seq);
            scatter_sub(fr.l21.as_ref(), xp.as_ref(), &mut x, &fr.boundary);
            scatter(xp.as_ref(), &mut x, fr.pivots.iter().copied());
        }
        for fr in self.fronts.iter().rev() {
            let np = fr.pivots.len();
            let mut xp = gather(x.as_ref(), fr.pivots.iter().copied(), np);
            if !fr.boundary.is_empty() {
                let xb = gather(x.as_ref(), fr.boundary.iter().copied(), fr.boundary.len());
                matmul(xp.as_mut(), Accum::Add, fr.u12.as_ref(), xb.as_ref(), -1.0, Par::Seq);
            }
            solve_upper_triangular_in_place(fr.lu.as_ref(), xp.as_mut(), Par::Seq);
            scatter(xp.as_ref(), &mut x, fr.pivots.iter().copied());
        }
        Ok(x)
    }

    /// Solves `A^T X = B` for every column of `B`.
    pub fn solve_adjoint_mat(&self, b: &Mat<f64>) -> Result<Mat<f64>> {
        self.check(b.nrows())?;
        let mut x = b.clone();
        // U^T w = b
        for fr in &self.fronts {
            let np = fr.pivots.len();
            let mut wp = gather(x.as_ref(), fr.pivots.iter().copied(), np);
            solve_lower_triangular_in_place(fr.lu.as_ref().transpose(), wp.as_mut(), Par::Seq);
            scatter_sub(fr.u12.as_ref().transpose(), wp.as_ref(), &mut x, &fr.boundary);
            scatter(wp.as_ref(), &mut x, fr.pivots.iter().copied());
        }
        // L^T v = w, then undo the row interchanges
        for fr in self.fronts.iter().rev() {
            let np = fr.pivots.len();
            let mut vp = gather(x.as_ref(), fr.pivots.iter().copied(), np);
            if !fr.boundary.is_empty() {
                let vb = gather(x.as_ref(), fr.boundary.iter().copied(), fr.boundary.len());
                matmul(vp.as_mut(), Accum::Add, fr.l21.as_ref().transpose(), vb.as_ref(), -1.0, Par::Seq);
            }
            solve_unit_upper_triangular_in_place(fr.lu.as_ref().transpose(), vp.as_mut(), Par::Seq);
            scatter(vp.as_ref(), &mut x, fr.perm.iter().map(|&i| fr.pivots[i]));
        }
        Ok(x)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x = self.solve_mat(&Mat::from_fn(b.len(), 1, |i, _| b[i]))?;
        Ok((0..b.len()).map(|i| x[(i, 0)]).collect())
    }

    pub fn solve_adjoint(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x = self.solve_adjoint_mat(&Mat::from_fn(b.len(), 1, |i, _| b[i]))?;
        Ok((0..b.len()).map(|i| x[(i, 0)]).collect())
    }

    /// Every front has at most one parent and at least one root exists.
    #[cfg(test)]
    fn is_tree(&self) -> bool {
        let mut seen = vec![0; self.fronts.len()];
        for fr in &self.fronts {
            for &c in &fr.children {
                seen[c] += 1;
            }
        }
        seen.iter().filter(|&&s| s == 0).count() >= 1 && seen.iter().all(|&s| s <= 1)
    }
}

/// Solves the Dirichlet problem on `system` and returns values at every
/// DOF (boundary DOFs carry the sampled data).
pub fn solve_dirichlet(system: &SparseSystem, data: &BoundaryData) -> Result<Vec<f64>> {
    let factor = factorize(system)?;
    let ui = factor.solve(&system.build_rhs(data))?;
    let ub = system.sample(&*data.dirichlet, system.boundary());
    let mut u = vec![0.0; system.n_dofs()];
    for (&d, v) in system.interior().iter().zip(ui) {
        u[d] = v;
    }
    for (&d, v) in system.boundary().iter().zip(ub) {
        u[d] = v;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_fd, assemble_hps, Region};
    use crate::problem::{make_helmholtz, make_variable_coefficient_2d};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tridiag(n: usize) -> (Csr, Vec<[f64; 3]>) {
        let mut a = Csr::new(n, n);
        for i in 0..n {
            let mut row = vec![(i, 2.0)];
            if i > 0 {
                row.push((i - 1, -1.0));
            }
            if i + 1 < n {
                row.push((i + 1, -1.0));
            }
            a.push_row(row);
        }
        (a, (0..n).map(|i| [i as f64, 0.0, 0.0]).collect())
    }

    fn rel_residual(a: &Csr, x: &[f64], b: &[f64], transpose: bool) -> f64 {
        let ax = if transpose { a.matvec_transpose(x).unwrap() } else { a.matvec(x).unwrap() };
        let num: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        num / den
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn hand_tridiagonal() {
        let (a, c) = tridiag(3);
        let f = factorize_matrix(&a, &c, 1).unwrap();
        let x = f.solve(&[1.0, 1.0, 1.0]).unwrap();
        for (xi, e) in x.iter().zip([1.5, 2.0, 1.5]) {
            assert!((xi - e).abs() < 1e-14);
        }
        // one dense front: U diagonal (2, 3/2, 4/3)
        let lu = &f.fronts[0].lu;
        for (k, e) in [2.0, 1.5, 4.0 / 3.0].iter().enumerate() {
            assert!((lu[(k, k)] - e).abs() < 1e-14);
        }
        assert_eq!(f.solve(&[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_factors_trivially() {
        let mut a = Csr::new(4, 4);
        for i in 0..4 {
            a.push_row(vec![(i, 1.0)]);
        }
        let c: Vec<[f64; 3]> = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
        let f = factorize_matrix(&a, &c, 1).unwrap();
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn fd_slab_solves_and_adjoint_solves() {
        let op = make_variable_coefficient_2d();
        let sys = assemble_fd(&op, &Region::new(&[0.0, 0.0], &[0.5, 1.0]).unwrap(), 1.0 / 64.0).unwrap();
        let f = factorize(&sys).unwrap();
        assert!(f.is_tree());
        let idx = sys.interior();
        let a = sys.block(idx, idx);
        let b = random(a.nrows(), 3);
        assert!(rel_residual(&a, &f.solve(&b).unwrap(), &b, false) < 1e-12);
        assert!(rel_residual(&a, &f.solve_adjoint(&b).unwrap(), &b, true) < 1e-12);
        let dense = a.nrows() * a.nrows();
        assert!(f.stats().factor_nnz < dense / 4, "{} vs {}", f.stats().factor_nnz, dense);
    }

    #[test]
    fn hps_slab_adjoint_residual() {
        let op = make_helmholtz(6.0, 2).unwrap();
        let sys = assemble_hps(&op, &Region::new(&[0.0, 0.0], &[0.5, 1.0]).unwrap(), &[2, 8], 8).unwrap();
        let f = factorize(&sys).unwrap();
        let idx = sys.interior();
        let a = sys.block(idx, idx);
        let b = random(a.nrows(), 5);
        assert!(rel_residual(&a, &f.solve(&b).unwrap(), &b, false) < 1e-10);
        assert!(rel_residual(&a, &f.solve_adjoint(&b).unwrap(), &b, true) < 1e-10);
    }

    #[test]
    fn hps_3d_slab_solves() {
        let op = make_helmholtz(3.0, 3).unwrap();
        let sys = assemble_hps(&op, &Region::new(&[0.0; 3], &[0.5, 1.0, 1.0]).unwrap(), &[2, 3, 3], 5).unwrap();
        let f = factorize(&sys).unwrap();
        let idx = sys.interior();
        let a = sys.block(idx, idx);
        let b = random(a.nrows(), 7);
        assert!(rel_residual(&a, &f.solve(&b).unwrap(), &b, false) < 1e-10);
        assert!(rel_residual(&a, &f.solve_adjoint(&b).unwrap(), &b, true) < 1e-10);
    }

    #[test]
    fn multi_rhs_matches_single_solves() {
        let op = make_helmholtz(0.0, 2).unwrap();
        let sys = assemble_fd(&op, &Region::unit(2), 1.0 / 24.0).unwrap();
        let f = factorize(&sys).unwrap();
        let n = f.n();
        let cols: Vec<Vec<f64>> = (0..3).map(|s| random(n, 10 + s)).collect();
        let b = Mat::from_fn(n, 3, |i, j| cols[j][i]);
        let x = f.solve_mat(&b).unwrap();
        let xa = f.solve_adjoint_mat(&b).unwrap();
        for (j, col) in cols.iter().enumerate() {
            let xs = f.solve(col).unwrap();
            let xas = f.solve_adjoint(col).unwrap();
            for i in 0..n {
                assert!((x[(i, j)] - xs[i]).abs() <= 1e-13 * xs[i].abs().max(1.0));
                assert!((xa[(i, j)] - xas[i]).abs() <= 1e-13 * xas[i].abs().max(1.0));
            }
        }
        assert!(f.solve(&[1.0]).is_err());
    }

    #[test]
    fn threshold_pivoting_handles_zero_diagonal() {
        // [[0, 1], [1, 0]] needs a row interchange
        let mut a = Csr::new(2, 2);
        a.push_row(vec![(1, 1.0)]);
        a.push_row(vec![(0, 1.0)]);
        let c = vec![[0.0; 3], [1.0, 0.0, 0.0]];
        let f = factorize_matrix(&a, &c, 1).unwrap();
        assert_eq!(f.solve(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
        assert_eq!(f.solve_adjoint(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn resonant_slab_is_reported() {
        // -u'' - k^2 u on 7 interior nodes: pick k^2 equal to the smallest
        // discrete eigenvalue (4/h^2) sin^2(pi h / 2).
        let h = 1.0 / 8.0;
        let lam = 4.0 / (h * h) * (std::f64::consts::PI * h / 2.0).sin().powi(2);
        let op = make_helmholtz(lam.sqrt(), 1).unwrap();
        let sys = assemble_fd(&op, &Region::unit(1), h).unwrap();
        match factorize(&sys) {
            Err(Error::LocalResonance { .. }) => {}
            other => panic!("expected resonance, got {other:?}"),
        }
    }
}
