//! Browser bindings: solve a small 2D problem, plot the spectrum of the
//! equilibrium operator, and compress one of its blocks.

use slabsolve::analysis::spectrum;
use slabsolve::dense::{frobenius, gaussian};
use slabsolve::discretize::{assemble, Backend, Region};
use slabsolve::equilibrium::{build_operator, BlockMode, EquilibriumOperator};
use slabsolve::hbs::{compress, Arity, HbsConfig};
use slabsolve::krylov::{gmres, GmresOptions};
use slabsolve::problem::Problem;
use slabsolve::slabs::{SlabDecomposition, Topology};
use wasm_bindgen::prelude::*;

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn problem(name: &str, kappa: f64) -> Result<Problem, JsError> {
    match name {
        "laplace2d" => Ok(Problem::laplace2d()),
        "vc2d" => Ok(Problem::vc2d(kappa)),
        "helmholtz2d" => Problem::helmholtz2d(kappa).map_err(err),
        other => Err(JsError::new(&format!("unknown problem {other}"))),
    }
}

fn operator(p: &Problem, cells: usize, n_ds: usize, mode: BlockMode) -> Result<EquilibriumOperator, JsError> {
    if cells % (n_ds + 1) != 0 {
        return Err(JsError::new(&format!("{cells} grid cells do not split into {} slabs", n_ds + 1)));
    }
    let decomp = SlabDecomposition::decompose(Region::unit(2), n_ds, Topology::Open).map_err(err)?;
    build_operator(&p.op, &decomp, Backend::Fd { h: 1.0 / cells as f64 }, mode).map_err(err)
}

#[wasm_bindgen]
pub struct Solution {
    cells: usize,
    values: Vec<f64>,
    history: Vec<f64>,
    iterations: usize,
    n_gamma: usize,
    max_error: f64,
}

#[wasm_bindgen]
impl Solution {
    /// Grid values row by row, `(cells + 1)^2` entries including the boundary.
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Relative GMRES residual after each iteration.
    pub fn history(&self) -> Vec<f64> {
        self.history.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn cells(&self) -> usize {
        self.cells
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(getter)]
    pub fn n_gamma(&self) -> usize {
        self.n_gamma
    }

    /// Max-norm error against the exact solution, NaN when none is known.
    #[wasm_bindgen(getter)]
    pub fn max_error(&self) -> f64 {
        self.max_error
    }
}

/// Solves on `[0,1]^2` with `cells` finite-difference cells per side and
/// `n_ds` interfaces; `k > 0` compresses the blocks at rank `k`.
#[wasm_bindgen]
pub fn solve(name: &str, kappa: f64, cells: usize, n_ds: usize, k: usize) -> Result<Solution, JsError> {
    let p = problem(name, kappa)?;
    let mode = if k == 0 {
        BlockMode::Dense
    } else {
        BlockMode::Hbs(HbsConfig::new(k, Arity::Binary, 1))
    };
    let eq = operator(&p, cells, n_ds, mode)?;
    let f = eq.equivalent_load(&p.data).map_err(err)?;
    let opts = GmresOptions {
        tol: 1e-10,
        max_iter: 400,
        restart: None,
    };
    let res = gmres(|u| eq.apply(u), &f, None, &opts).map_err(err)?;
    let rec = eq.reconstruct(&p.data, &res.x).map_err(err)?;
    let global = assemble(&p.op, eq.decomposition().domain(), eq.backend()).map_err(err)?;
    let vals = rec.values_on(&global).map_err(err)?;
    let n = cells + 1;
    let mut values = vec![f64::NAN; n * n];
    let mut max_error = 0.0f64;
    for (d, v) in vals.iter().enumerate() {
        let x = global.point(d);
        let (i, j) = ((x[0] * cells as f64).round() as usize, (x[1] * cells as f64).round() as usize);
        values[j * n + i] = *v;
        if let Some(r) = &p.reference {
            max_error = max_error.max(((r.solution)(&x[..2]) - v).abs());
        }
    }
    Ok(Solution {
        cells,
        values,
        history: res.history,
        iterations: res.iterations,
        n_gamma: eq.n(),
        max_error: if p.reference.is_some() { max_error } else { f64::NAN },
    })
}

/// Eigenvalues of `I - S` as interleaved `(re, im)` pairs.
#[wasm_bindgen]
pub fn eigenvalues(name: &str, kappa: f64, cells: usize, n_ds: usize) -> Result<Vec<f64>, JsError> {
    let p = problem(name, kappa)?;
    let eq = operator(&p, cells, n_ds, BlockMode::Dense)?;
    let n = eq.n();
    let m = Mat::<f64>::identity(n, n) - eq.s_dense();
    let eig = spectrum(m.as_ref()).map_err(err)?;
    Ok(eig.iter().flat_map(|z| [z.re, z.im]).collect())
}

/// Relative error of the rank-`k` HBS compression of the block coupling
/// interface 1 to interface 0, one entry per `k`, measured on random
/// vectors.
#[wasm_bindgen]
pub fn compression_errors(name: &str, kappa: f64, cells: usize, ks: Vec<u32>) -> Result<Vec<f64>, JsError> {
    let p = problem(name, kappa)?;
    let eq = operator(&p, cells, 3, BlockMode::Dense)?;
    let block = eq.block(1, 0).ok_or_else(|| JsError::new("no block (1, 0)"))?.to_dense();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let probes = gaussian(block.ncols(), 8, &mut rng);
    let exact = &block * &probes;
    let points = eq.interface_points(1).to_vec();
    ks.iter()
        .map(|&k| {
            let k = k as usize;
            let h = compress(
                |x| Ok(&block * x),
                |x| Ok(block.transpose() * x),
                &points,
                1,
                &HbsConfig::new(k, Arity::Binary, 1),
            )
            .map_err(err)?;
            let diff = h.apply(probes.as_ref()) - &exact;
            Ok(frobenius(diff.as_ref()) / frobenius(exact.as_ref()))
        })
        .collect()
}
