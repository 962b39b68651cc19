//! Small dense kernels on top of faer.

use faer::linalg::triangular_solve::solve_upper_triangular_in_place;
use faer::{Mat, MatRef, Par};
use rand::Rng;
use rand_distr::StandardNormal;

/// `rows × cols` matrix of independent standard normals, filled column by
/// column.
pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn col_to_vec(a: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn vec_to_col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Rows `rows` of `a`.
pub fn select_rows(a: MatRef<'_, f64>, rows: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Columns `cols` of `a`.
pub fn select_cols(a: MatRef<'_, f64>, cols: &[usize]) -> Mat<f64> {
    Mat::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

/// Null space and pseudo-inverse of a wide, full-row-rank `m × s` matrix.
pub struct WideFactors {
    /// `s × (s - m)` orthonormal basis of `null(a)`.
    pub null: Mat<f64>,
    /// `s × m` Moore–Penrose inverse.
    pub pinv: Mat<f64>,
}

/// Full QR of `a^T = [Q1 Q2] [R; 0]` gives `null(a) = Q2` and
/// `a^+ = Q1 R^{-T}`.
pub fn wide_factors(a: MatRef<'_, f64>) -> WideFactors {
    let (m, s) = (a.nrows(), a.ncols());
    assert!(m <= s, "wide_factors needs a wide matrix");
    let at = a.transpose().to_owned();
    let qr = at.qr();
    let q = qr.compute_Q();
    let r = qr.thin_R().to_owned();
    let q1 = q.as_ref().submatrix(0, 0, s, m);
    // Q1 R^{-T}: solve R X = Q1^T, then transpose
    let mut x = q1.transpose().to_owned();
    solve_upper_triangular_in_place(r.as_ref(), x.as_mut(), Par::Seq);
    WideFactors {
        null: q.as_ref().submatrix(0, m, s, s - m).to_owned(),
        pinv: x.transpose().to_owned(),
    }
}

/// Orthonormal basis of the first `k` columns selected by column-pivoted
/// Householder QR (ties go to the lowest index).
pub fn cpqr_basis(a: MatRef<'_, f64>, k: usize) -> Mat<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let k = k.min(m).min(n);
    let mut w = a.to_owned();
    let mut norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum())
        .collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for step in 0..k {
        let mut best = step;
        for j in step + 1..n {
            if norms[j] > norms[best] {
                best = j;
            }
        }
        if best != step {
            for i in 0..m {
                let t = w[(i, step)];
                w[(i, step)] = w[(i, best)];
                w[(i, best)] = t;
            }
            norms.swap(step, best);
        }
        // Householder vector for column `step`, rows step..m
        let mut v: Vec<f64> = (step..m).map(|i| w[(i, step)]).collect();
        let alpha = norm2(&v);
        if alpha == 0.0 {
            v.iter_mut().for_each(|x| *x = 0.0);
            v[0] = 1.0;
        } else {
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let nv = norm2(&v);
            v.iter_mut().for_each(|x| *x /= nv);
        }
        for j in step..n {
            let d: f64 = (step..m).map(|i| v[i - step] * w[(i, j)]).sum();
            for i in step..m {
                w[(i, j)] -= 2.0 * d * v[i - step];
            }
        }
        for (j, nj) in norms.iter_mut().enumerate().skip(step + 1) {
            *nj = (step + 1..m).map(|i| w[(i, j)] * w[(i, j)]).sum();
        }
        reflectors.push(v);
    }
    let mut q = Mat::<f64>::zeros(m, k);
    for j in 0..k {
        q[(j, j)] = 1.0;
    }
    for step in (0..k).rev() {
        let v = &reflectors[step];
        for j in 0..k {
            let d: f64 = (step..m).map(|i| v[i - step] * q[(i, j)]).sum();
            for i in step..m {
                q[(i, j)] -= 2.0 * d * v[i - step];
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wide_factors_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian(5, 12, &mut rng);
        let f = wide_factors(a.as_ref());
        let an = &a * &f.null;
        assert!(max_abs(an.as_ref()) < 1e-13);
        let ap = &a * &f.pinv;
        let eye = Mat::<f64>::identity(5, 5);
        assert!(max_abs((&ap - &eye).as_ref()) < 1e-13);
        let qtq = f.null.transpose() * &f.null;
        assert!(max_abs((&qtq - Mat::<f64>::identity(7, 7)).as_ref()) < 1e-13);
    }

    #[test]
    fn cpqr_basis_spans_low_rank_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = gaussian(20, 3, &mut rng);
        let c = gaussian(3, 15, &mut rng);
        let a = &b * &c;
        let q = cpqr_basis(a.as_ref(), 3);
        let qtq = q.transpose() * &q;
        assert!(max_abs((&qtq - Mat::<f64>::identity(3, 3)).as_ref()) < 1e-13);
        let resid = &a - &q * (q.transpose() * &a);
        assert!(frobenius(resid.as_ref()) < 1e-12 * frobenius(a.as_ref()));
    }

    #[test]
    fn cpqr_prefers_lowest_index_on_ties() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let q = cpqr_basis(a.as_ref(), 1);
        assert!((q[(0, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
