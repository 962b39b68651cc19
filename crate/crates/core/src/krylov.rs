//! Restarted GMRES with modified Gram–Schmidt and one reorthogonalization
//! pass.

use crate::dense::{dot, norm2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Stop when `||b - A x|| <= tol ||b||`.
    pub tol: f64,
    pub max_iter: usize,
    /// Krylov dimension before a restart; `None` never restarts.
    pub restart: Option<usize>,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            tol: 1e-10,
            max_iter: 500,
            restart: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual estimate after each iteration, starting with the
    /// initial residual.
    pub history: Vec<f64>,
}

impl GmresResult {
    pub fn relative_residual(&self) -> f64 {
        *self.history.last().unwrap_or(&0.0)
    }
}

/// Solves `A x = b` from the initial guess `x0` (zero if `None`).
pub fn gmres<F>(mut apply: F, b: &[f64], x0: Option<&[f64]>, opts: &GmresOptions) -> Result<GmresResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("GMRES tolerance must be positive"));
    }
    let mut x = match x0 {
        Some(x0) if x0.len() != n => {
            return Err(Error::DimensionMismatch {
                context: "GMRES initial guess",
                expected: n,
                got: x0.len(),
            })
        }
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(GmresResult {
            x: vec![0.0; n],
            iterations: 0,
            converged: true,
            history: vec![0.0],
        });
    }
    let restart = opts.restart.unwrap_or(opts.max_iter).max(1).min(n.max(1));
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let ax = apply(&x)?;
        check_len(&ax, n)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if history.is_empty() {
            history.push(beta / bnorm);
        }
        if beta <= opts.tol * bnorm || iterations >= opts.max_iter {
            return Ok(GmresResult {
                x,
                iterations,
                converged: beta <= opts.tol * bnorm,
                history,
            });
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        // Hessenberg columns after rotation
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut rot: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![beta];
        let mut happy = false;
        for _ in 0..restart {
            if iterations >= opts.max_iter {
                break;
            }
            let mut w = apply(basis.last().unwrap())?;
            check_len(&w, n)?;
            let k = basis.len();
            let mut col = vec![0.0; k + 1];
            for _pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    col[i] += c;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let hn = norm2(&w);
            col[k] = hn;
            for (i, &(c, s)) in rot.iter().enumerate() {
                let (a, b) = (col[i], col[i + 1]);
                col[i] = c * a + s * b;
                col[i + 1] = -s * a + c * b;
            }
            let (a, b) = (col[k - 1], col[k]);
            let rho = a.hypot(b);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, b / rho) };
            col[k - 1] = rho;
            col[k] = 0.0;
            rot.push((c, s));
            let gk = g[k - 1];
            g[k - 1] = c * gk;
            g.push(-s * gk);
            h.push(col);
            iterations += 1;
            let res = g[k].abs();
            history.push(res / bnorm);
            if res <= opts.tol * bnorm || hn <= 1e-14 * beta {
                happy = true;
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let m = h.len();
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let s: f64 = (i + 1..m).map(|j| h[j][i] * y[j]).sum();
            if h[i][i] == 0.0 {
                return Err(Error::Breakdown(format!("singular Hessenberg at step {i}")));
            }
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.iter_mut().zip(v).for_each(|(xj, vj)| *xj += yi * vj);
        }
        if happy || iterations >= opts.max_iter {
            let converged = *history.last().unwrap() <= opts.tol;
            return Ok(GmresResult {
                x,
                iterations,
                converged,
                history,
            });
        }
    }
}

fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            context: "GMRES operator output",
            expected: n,
            got: v.len(),
        });
    }
    Ok(())
}
