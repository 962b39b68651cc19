//! Randomized construction of the telescoping factorization.

use super::{build_tree, vstack, HbsConfig, HbsMatrix, HbsNode};
use crate::dense::{cpqr_basis, gaussian, select_cols, select_rows, wide_factors};
use crate::error::{Error, Result};
use faer::{Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sample count `s = alpha k + 10`.
pub fn sample_count(k: usize, alpha: usize) -> usize {
    alpha * k + 10
}

struct Reduced {
    omega: Mat<f64>,
    y: Mat<f64>,
    psi: Mat<f64>,
    z: Mat<f64>,
}

/// Compresses the square operator available through `apply` (`A X`) and
/// `apply_adjoint` (`A^T X`), with rows and columns indexed by `points`.
pub fn compress<F, G>(
    apply: F,
    apply_adjoint: G,
    points: &[[f64; 2]],
    interface_dim: usize,
    cfg: &HbsConfig,
) -> Result<HbsMatrix>
where
    F: Fn(MatRef<'_, f64>) -> Result<Mat<f64>>,
    G: Fn(MatRef<'_, f64>) -> Result<Mat<f64>>,
{
    cfg.validate()?;
    let n = points.len();
    let k = cfg.k;
    let tree = build_tree(points, interface_dim, cfg.arity, cfg.leaf())?;
    let check = |m: &Mat<f64>, what: &'static str, cols: usize| {
        if m.nrows() != n || m.ncols() != cols {
            Err(Error::DimensionMismatch {
                context: what,
                expected: n * cols,
                got: m.nrows() * m.ncols(),
            })
        } else {
            Ok(())
        }
    };

    if tree.nodes().len() == 1 {
        let full = apply(Mat::<f64>::identity(n, n).as_ref())?;
        check(&full, "HBS dense samples", n)?;
        let idx = &tree.nodes()[0].indices;
        let d = select_cols(select_rows(full.as_ref(), idx).as_ref(), idx);
        let node = HbsNode {
            u: None,
            v: None,
            d: Some(d),
            m: n,
            rank: n,
        };
        return Ok(HbsMatrix { tree, nodes: vec![node] });
    }

    let s = cfg.samples();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega = gaussian(n, s, &mut rng);
    let psi = gaussian(n, s, &mut rng);
    let y = apply(omega.as_ref())?;
    check(&y, "HBS forward samples", s)?;
    let z = apply_adjoint(psi.as_ref())?;
    check(&z, "HBS adjoint samples", s)?;

    let tnodes = tree.nodes();
    let root = tree.root();
    let mut reduced: Vec<Option<Reduced>> = (0..tnodes.len()).map(|_| None).collect();
    let mut nodes = Vec::with_capacity(tnodes.len());
    for (t, tn) in tnodes.iter().enumerate() {
        let r = if tn.is_leaf() {
            Reduced {
                omega: select_rows(omega.as_ref(), &tn.indices),
                y: select_rows(y.as_ref(), &tn.indices),
                psi: select_rows(psi.as_ref(), &tn.indices),
                z: select_rows(z.as_ref(), &tn.indices),
            }
        } else {
            let kids: Vec<Reduced> = tn.children.iter().map(|&c| reduced[c].take().expect("postorder")).collect();
            Reduced {
                omega: vstack(kids.iter().map(|c| c.omega.as_ref()), s),
                y: vstack(kids.iter().map(|c| c.y.as_ref()), s),
                psi: vstack(kids.iter().map(|c| c.psi.as_ref()), s),
                z: vstack(kids.iter().map(|c| c.z.as_ref()), s),
            }
        };
        let m = r.omega.nrows();
        if t == root {
            let d = &r.y * wide_factors(r.omega.as_ref()).pinv;
            nodes.push(HbsNode {
                u: None,
                v: None,
                d: Some(d),
                m,
                rank: m,
            });
            break;
        }
        if m <= k {
            nodes.push(HbsNode {
                u: None,
                v: None,
                d: None,
                m,
                rank: m,
            });
            reduced[t] = Some(r);
            continue;
        }
        if s < m + k {
            return Err(Error::invalid(format!(
                "HBS node with {m} rows needs at least {} samples, have {s}",
                m + k
            )));
        }
        let fo = wide_factors(r.omega.as_ref());
        let fp = wide_factors(r.psi.as_ref());
        let u = cpqr_basis((&r.y * &fo.null).as_ref(), k);
        let v = cpqr_basis((&r.z * &fp.null).as_ref(), k);
        let eye = Mat::<f64>::identity(m, m);
        let pu = &eye - &u * u.transpose();
        let pv = &eye - &v * v.transpose();
        let d = &pu * (&r.y * &fo.pinv) + &u * (u.transpose() * (&pv * (&r.z * &fp.pinv)).transpose());
        let next = Reduced {
            omega: v.transpose() * &r.omega,
            y: u.transpose() * (&r.y - &d * &r.omega),
            psi: u.transpose() * &r.psi,
            z: v.transpose() * (&r.z - d.transpose() * &r.psi),
        };
        reduced[t] = Some(next);
        nodes.push(HbsNode {
            u: Some(u),
            v: Some(v),
            d: Some(d),
            m,
            rank: k,
        });
    }
    Ok(HbsMatrix { tree, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{frobenius, max_abs};
    use crate::hbs::Arity;

    fn grid(n: usize) -> Vec<[f64; 2]> {
        (0..n * n).map(|i| [(i / n) as f64 / n as f64, (i % n) as f64 / n as f64]).collect()
    }

    fn line(n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|i| [i as f64 / n as f64, 0.0]).collect()
    }

    fn dense_compress(a: &Mat<f64>, pts: &[[f64; 2]], dim: usize, cfg: &HbsConfig) -> HbsMatrix {
        compress(|x| Ok(a * x), |x| Ok(a.transpose() * x), pts, dim, cfg).unwrap()
    }

    fn kernel(pts: &[[f64; 2]], shift: [f64; 2]) -> Mat<f64> {
        Mat::from_fn(pts.len(), pts.len(), |i, j| {
            let dx = pts[i][0] - pts[j][0] + shift[0];
            let dy = pts[i][1] - pts[j][1] + shift[1];
            let r2 = dx * dx + dy * dy;
            (-r2 / 0.05).exp() + if i == j { 1.0 } else { 0.0 }
        })
    }

    #[test]
    fn identity_is_exact() {
        let pts = line(100);
        let a = Mat::<f64>::identity(100, 100);
        let h = dense_compress(&a, &pts, 1, &HbsConfig::new(4, Arity::Binary, 1));
        assert!(max_abs((h.to_dense() - &a).as_ref()) < 1e-12);
    }

    #[test]
    fn rank_one_plus_diagonal_is_exact() {
        let pts = line(128);
        let a = Mat::from_fn(128, 128, |i, j| ((i + 1) as f64).sqrt() * ((j as f64) * 0.1).cos() + if i == j { 2.0 } else { 0.0 });
        let h = dense_compress(&a, &pts, 1, &HbsConfig::new(3, Arity::Binary, 7));
        let err = frobenius((h.to_dense() - &a).as_ref()) / frobenius(a.as_ref());
        assert!(err < 1e-11, "err {err}");
    }

    #[test]
    fn smooth_kernel_error_decreases_with_rank() {
        let pts = grid(24);
        let a = kernel(&pts, [0.03, -0.02]);
        let mut last = f64::INFINITY;
        for k in [10, 20, 40] {
            let h = dense_compress(&a, &pts, 2, &HbsConfig::new(k, Arity::Quad, 3));
            let err = frobenius((h.to_dense() - &a).as_ref()) / frobenius(a.as_ref());
            assert!(err < last, "k={k} err={err} last={last}");
            last = err;
        }
        assert!(last < 1e-4, "k=40 err {last}");
    }

    #[test]
    fn adjoint_matches_transpose() {
        let pts = grid(16);
        let a = kernel(&pts, [0.05, 0.01]);
        let h = dense_compress(&a, &pts, 2, &HbsConfig::new(12, Arity::Binary, 5));
        let dense = h.to_dense();
        let adj = h.apply_adjoint(Mat::<f64>::identity(256, 256).as_ref());
        assert!(max_abs((adj - dense.transpose()).as_ref()) < 1e-12);
        let x: Vec<f64> = (0..256).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..256).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs = crate::dense::dot(&h.matvec(&x), &y);
        let rhs = crate::dense::dot(&x, &h.matvec_adjoint(&y));
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let pts = grid(16);
        let a = kernel(&pts, [0.0, 0.0]);
        let cfg = HbsConfig::new(10, Arity::Quad, 42);
        let h1 = dense_compress(&a, &pts, 2, &cfg).to_dense();
        let h2 = dense_compress(&a, &pts, 2, &cfg).to_dense();
        assert_eq!(max_abs((h1 - h2).as_ref()), 0.0);
    }

    #[test]
    fn matvec_is_linear() {
        let pts = grid(12);
        let a = kernel(&pts, [0.02, 0.0]);
        let h = dense_compress(&a, &pts, 2, &HbsConfig::new(8, Arity::Binary, 9));
        let x: Vec<f64> = (0..144).map(|i| (i as f64).sin()).collect();
        let w: Vec<f64> = (0..144).map(|i| (i as f64 * 0.5).cos()).collect();
        let comb: Vec<f64> = x.iter().zip(&w).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let (hx, hw, hc) = (h.matvec(&x), h.matvec(&w), h.matvec(&comb));
        for i in 0..144 {
            assert!((hc[i] - (2.0 * hx[i] - 3.0 * hw[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn small_leaf_is_rejected() {
        let pts = line(50);
        let a = Mat::<f64>::identity(50, 50);
        let mut cfg = HbsConfig::new(8, Arity::Binary, 1);
        cfg.leaf_size = Some(8);
        assert!(compress(|x| Ok(&a * x), |x| Ok(&a * x), &pts, 1, &cfg).is_err());
    }

    #[test]
    fn storage_rate_is_reported() {
        let pts = grid(32);
        let a = kernel(&pts, [0.0, 0.0]);
        let h = dense_compress(&a, &pts, 2, &HbsConfig::new(10, Arity::Quad, 1));
        let rep = h.storage_report();
        assert!(rep.rate < 0.25, "rate {}", rep.rate);
        assert_eq!(rep.n, 1024);
    }
}
