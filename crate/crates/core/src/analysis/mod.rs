//! Dense oracles and diagnostics: the global interface Schur complement,
//! red-black projections, spectra, normality measures and admissibility
//! ranks.

mod rank;

pub use rank::{admissible_ranks, numerical_rank, ClusterRank, LevelRanks};

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef, Par, Side};

use crate::dense::{frobenius, select_cols, select_rows};
use crate::discretize::{RowKind, SparseSystem};
use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::sparse::factorize_matrix;

/// Largest interface dimension for dense eigen- and singular-value work.
pub const DENSE_INTERFACE_CAP: usize = 6000;
/// Largest global system for Schur complement oracles.
pub const SCHUR_DOF_CAP: usize = 40_000;
const SCHUR_CHUNK: usize = 256;

fn cap(what: &'static str, size: usize, limit: usize) -> Result<()> {
    if size > limit {
        return Err(Error::DenseCapExceeded { what, size, cap: limit });
    }
    Ok(())
}

/// Interface DOFs of `global` on each plane `x = x_j`, in canonical order.
pub fn interface_dofs(global: &SparseSystem, xs: &[f64]) -> Result<Vec<Vec<usize>>> {
    xs.iter().map(|&x| global.plane_dofs(x)).collect()
}

/// Dense interface Schur complement `T` with its block layout.
#[derive(Debug, Clone)]
pub struct DenseReduced {
    pub t: Mat<f64>,
    pub offsets: Vec<usize>,
}

impl DenseReduced {
    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    pub fn n_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    fn range(&self, j: usize) -> (usize, usize) {
        (self.offsets[j], self.offsets[j + 1] - self.offsets[j])
    }

    /// `T_{j,j'}`.
    pub fn t_block(&self, j: usize, jp: usize) -> Mat<f64> {
        let (r0, nr) = self.range(j);
        let (c0, nc) = self.range(jp);
        self.t.as_ref().submatrix(r0, c0, nr, nc).to_owned()
    }

    /// `-T_{jj}^{-1} T_{j,j'}`.
    pub fn s_block(&self, j: usize, jp: usize) -> Mat<f64> {
        let lu = self.t_block(j, j).partial_piv_lu();
        -lu.solve(self.t_block(j, jp))
    }

    /// `S = blockdiag(T_jj)^{-1} T`.
    pub fn s(&self) -> Mat<f64> {
        let mut s = Mat::<f64>::zeros(self.n(), self.n());
        for j in 0..self.n_blocks() {
            let (r0, nr) = self.range(j);
            let lu = self.t_block(j, j).partial_piv_lu();
            let rows = lu.solve(self.t.as_ref().subrows(r0, nr));
            s.as_mut().subrows_mut(r0, nr).copy_from(&rows);
        }
        s
    }
}

/// Eliminates every non-interface interior DOF of `global` (Dirichlet
/// DOFs carry zero data) and returns `T(J, J_cols)` where `J` is the
/// concatenation of `interfaces` and `J_cols` the concatenation of the
/// interfaces listed in `columns`.
pub fn schur_columns(global: &SparseSystem, interfaces: &[Vec<usize>], columns: &[usize]) -> Result<Mat<f64>> {
    cap("global DOFs for a Schur oracle", global.n_dofs(), SCHUR_DOF_CAP)?;
    let j_all: Vec<usize> = interfaces.concat();
    let mut is_j = vec![false; global.n_dofs()];
    for &d in &j_all {
        if global.kind(d) == RowKind::Dirichlet {
            return Err(Error::invalid("interface DOF on the Dirichlet boundary"));
        }
        is_j[d] = true;
    }
    let jc: Vec<usize> = global.interior().iter().copied().filter(|&d| !is_j[d]).collect();
    let cols: Vec<usize> = columns.iter().flat_map(|&c| interfaces[c].iter().copied()).collect();
    let dim = global.dim();
    let coords: Vec<[f64; 3]> = jc.iter().map(|&d| global.point(d)).collect();
    let factor = factorize_matrix(&global.block(&jc, &jc), &coords, dim)?;
    let a_jjc = global.block(&j_all, &jc);
    let a_jcj = global.block(&jc, &cols);
    let a_jj = global.block(&j_all, &cols);
    let chunks = cols.len().div_ceil(SCHUR_CHUNK);
    let parts = map_indexed(chunks, |c| {
        let start = c * SCHUR_CHUNK;
        let w = SCHUR_CHUNK.min(cols.len() - start);
        let rhs = Mat::from_fn(jc.len(), w, |i, k| a_jcj.get(i, start + k));
        let x = factor.solve_mat(&rhs)?;
        let corr = a_jjc.mul_dense(&x);
        Ok(Mat::from_fn(j_all.len(), w, |i, k| a_jj.get(i, start + k) - corr[(i, k)]))
    })?;
    let mut t = Mat::<f64>::zeros(j_all.len(), cols.len());
    for (c, part) in parts.into_iter().enumerate() {
        t.as_mut().subcols_mut(c * SCHUR_CHUNK, part.ncols()).copy_from(&part);
    }
    Ok(t)
}

/// Dense `T` over all interfaces.
pub fn schur_reduce(global: &SparseSystem, interfaces: &[Vec<usize>]) -> Result<DenseReduced> {
    let n: usize = interfaces.iter().map(Vec::len).sum();
    cap("interface DOFs for a dense Schur complement", n, DENSE_INTERFACE_CAP)?;
    let all: Vec<usize> = (0..interfaces.len()).collect();
    let t = schur_columns(global, interfaces, &all)?;
    let mut offsets = vec![0];
    for i in interfaces {
        offsets.push(offsets.last().unwrap() + i.len());
    }
    Ok(DenseReduced { t, offsets })
}

fn check_spd(t: MatRef<'_, f64>) -> Result<()> {
    let asym = frobenius((t - t.transpose()).as_ref());
    if asym > 1e-12 * frobenius(t) {
        return Err(Error::NotSpd(format!("relative asymmetry {:.2e}", asym / frobenius(t))));
    }
    t.llt(Side::Lower)
        .map(|_| ())
        .map_err(|_| Error::NotSpd("Cholesky factorization failed".into()))
}

/// Red-black split of `S` into two `T`-orthogonal projections.
#[derive(Debug, Clone)]
pub struct RedBlack {
    pub p: [Mat<f64>; 2],
    /// `||P_i^2 - P_i||_F / ||P_i||_F`.
    pub idempotency: [f64; 2],
    /// `||P_i^T T - T P_i||_F / ||T P_i||_F`.
    pub self_adjointness: [f64; 2],
    /// `||P_1 + P_2 - S||_F / ||S||_F`.
    pub sum_defect: f64,
}

/// `P_1` (even interfaces, "red") and `P_2` (odd, "black"): each keeps the
/// rows of its colour in `blockdiag(T_cc)^{-1} T` and zeroes the rest.
pub fn red_black_projections(red: &DenseReduced) -> Result<RedBlack> {
    check_spd(red.t.as_ref())?;
    let n = red.n();
    let mut p = [Mat::<f64>::zeros(n, n), Mat::<f64>::zeros(n, n)];
    for colour in 0..2 {
        let idx: Vec<usize> = (0..red.n_blocks())
            .filter(|j| j % 2 == colour)
            .flat_map(|j| red.offsets[j]..red.offsets[j + 1])
            .collect();
        if idx.is_empty() {
            continue;
        }
        let t_cc = select_cols(select_rows(red.t.as_ref(), &idx).as_ref(), &idx);
        let rows = t_cc.llt(Side::Lower).map_err(|_| Error::NotSpd("colour block".into()))?.solve(select_rows(red.t.as_ref(), &idx));
        for (r, &i) in idx.iter().enumerate() {
            for c in 0..n {
                p[colour][(i, c)] = rows[(r, c)];
            }
        }
    }
    let rel = |a: Mat<f64>, b: f64| frobenius(a.as_ref()) / b.max(f64::MIN_POSITIVE);
    let idempotency = [0, 1].map(|i| rel(&p[i] * &p[i] - &p[i], frobenius(p[i].as_ref())));
    let self_adjointness = [0, 1].map(|i| {
        let tp = &red.t * &p[i];
        rel(p[i].transpose() * &red.t - &tp, frobenius(tp.as_ref()))
    });
    let s = red.s();
    let sum_defect = rel(&p[0] + &p[1] - &s, frobenius(s.as_ref()));
    Ok(RedBlack {
        p,
        idempotency,
        self_adjointness,
        sum_defect,
    })
}

/// Eigenvalues of `S = D^{-1} T` for SPD `T`, via the symmetric form
/// `L^{-1} T L^{-T}` with `D = L L^T`; ascending.
pub fn spd_s_eigenvalues(red: &DenseReduced) -> Result<Vec<f64>> {
    check_spd(red.t.as_ref())?;
    let n = red.n();
    let mut m = red.t.clone();
    for j in 0..red.n_blocks() {
        let (o, len) = red.range(j);
        let llt = red
            .t_block(j, j)
            .llt(Side::Lower)
            .map_err(|_| Error::NotSpd(format!("diagonal block {j}")))?;
        let l = llt.L().to_owned();
        solve_lower_triangular_in_place(l.as_ref(), m.as_mut().subrows_mut(o, len), Par::Seq);
        let mut cols = m.as_ref().subcols(o, len).transpose().to_owned();
        solve_lower_triangular_in_place(l.as_ref(), cols.as_mut(), Par::Seq);
        m.as_mut().subcols_mut(o, len).copy_from(cols.transpose());
    }
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    sym.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver: {e:?}")))
}

/// All eigenvalues of a dense square matrix.
pub fn spectrum(m: MatRef<'_, f64>) -> Result<Vec<c64>> {
    cap("matrix size for an eigendecomposition", m.nrows(), DENSE_INTERFACE_CAP)?;
    m.eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigensolver: {e:?}")))
}

/// Singular values, descending.
pub fn singular_values(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    cap("matrix size for an SVD", m.nrows().max(m.ncols()), DENSE_INTERFACE_CAP)?;
    m.singular_values()
        .map_err(|e| Error::Numerical(format!("SVD: {e:?}")))
}

/// `||m||_2`.
pub fn norm2(m: MatRef<'_, f64>) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// `D S D^{-1}` with `D = diag(w)`.
pub fn weighted(s: MatRef<'_, f64>, w: &[f64]) -> Mat<f64> {
    Mat::from_fn(s.nrows(), s.ncols(), |i, j| w[i] * s[(i, j)] / w[j])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityReport {
    /// `||S_{j,j-1} - S_{j-1,j}^T||_2` at the chosen interface.
    pub block_difference: f64,
    /// `max_i ||lambda_i| - sigma_i|` with both sorted descending.
    pub lambda_sigma: f64,
    pub kappa_rho: f64,
    pub kappa_2: f64,
}

impl NormalityReport {
    pub fn ratio_minus_one(&self) -> f64 {
        self.kappa_2 / self.kappa_rho - 1.0
    }
}

/// Normality measures of the equilibrium operator `s` (identity diagonal
/// blocks) with block `offsets`, evaluated at interface `j >= 1`.
pub fn normality_report(s: MatRef<'_, f64>, offsets: &[usize], j: usize) -> Result<NormalityReport> {
    if j == 0 || j + 1 >= offsets.len() {
        return Err(Error::invalid("normality interface needs a lower neighbour"));
    }
    let block = |r: usize, c: usize| {
        s.submatrix(offsets[r], offsets[c], offsets[r + 1] - offsets[r], offsets[c + 1] - offsets[c])
    };
    let diff = block(j, j - 1) - block(j - 1, j).transpose();
    let block_difference = norm2(diff.as_ref())?;
    let mut moduli: Vec<f64> = spectrum(s)?.iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let sigma = singular_values(s)?;
    let lambda_sigma = moduli.iter().zip(&sigma).map(|(l, s)| (l - s).abs()).fold(0.0, f64::max);
    Ok(NormalityReport {
        block_difference,
        lambda_sigma,
        kappa_rho: moduli[0] / moduli[moduli.len() - 1],
        kappa_2: sigma[0] / sigma[sigma.len() - 1],
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
