//! Runners that solve boundary value problems end to end.

use std::fs;
use std::path::{Path, PathBuf};

use faer::linalg::solvers::Solve;
use faer::Mat;

use super::{Cell, ExperimentConfig, GmresSpec, Table};
use crate::dense::norm2;
use crate::discretize::{assemble, Backend, RowKind};
use crate::equilibrium::{build_operator, BlockMode, EquilibriumOperator};
use crate::error::{Error, Result};
use crate::krylov::{gmres, GmresOptions};
use crate::problem::Problem;
use crate::slabs::{SlabDecomposition, Topology};
use crate::sparse::solve_dirichlet;
use crate::timing::Stopwatch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Random probes used to measure the compression error (HBS only).
    pub probes: usize,
    pub probe_seed: u64,
    /// Also solve the global sparse system and compare at every DOF.
    pub global_check: bool,
}

/// One end-to-end solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRow {
    pub width: f64,
    pub n_ds: usize,
    pub backend: Backend,
    pub mode: String,
    pub k: usize,
    /// Unknowns of the global discretization (`None` when periodic).
    pub n_total: Option<usize>,
    pub n_gamma: usize,
    pub storage_rate: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
    /// True relative residual `||f - (I - S) u|| / ||f||`.
    pub residual: f64,
    pub volume_error: Option<f64>,
    pub global_error: Option<f64>,
    pub probe_error: Option<f64>,
    pub t_a: f64,
    pub t_yz: f64,
    pub t_hbs: f64,
    pub t_gmres: f64,
    pub t_total: f64,
    pub interface: Vec<f64>,
}

pub(super) const SOLVE_COLUMNS: &[&str] = &[
    "problem", "backend", "H", "n_ds", "h", "p", "mode", "k", "N", "n_gamma", "storage_rate", "iterations",
    "converged", "tol", "residual", "volume_error", "global_error", "probe_error", "t_A", "t_YZ", "t_HBS",
    "t_gmres", "t_total",
];

impl SolveRow {
    pub(super) fn cells(&self, problem: &str) -> Vec<Cell> {
        let (h, p) = match self.backend {
            Backend::Fd { h } => (h, 0),
            Backend::Hps { p, .. } => (f64::NAN, p),
        };
        let opt = |v: Option<f64>| Cell::from(v.unwrap_or(f64::NAN));
        vec![
            problem.into(),
            self.backend.name().into(),
            self.width.into(),
            self.n_ds.into(),
            h.into(),
            p.into(),
            self.mode.as_str().into(),
            self.k.into(),
            self.n_total.map(Cell::from).unwrap_or(Cell::Float(f64::NAN)),
            self.n_gamma.into(),
            self.storage_rate.into(),
            self.iterations.into(),
            self.converged.into(),
            self.tol.into(),
            self.residual.into(),
            opt(self.volume_error),
            opt(self.global_error),
            opt(self.probe_error),
            self.t_a.into(),
            self.t_yz.into(),
            self.t_hbs.into(),
            self.t_gmres.into(),
            self.t_total.into(),
        ]
    }
}

/// Builds the operator, solves `(I - S) u = f` with GMRES and measures the
/// volume solution against whatever references are available.
pub fn solve_once(
    problem: &Problem,
    decomp: &SlabDecomposition,
    backend: Backend,
    mode: BlockMode,
    gmres_spec: &GmresSpec,
    opts: &SolveOptions,
) -> Result<(SolveRow, EquilibriumOperator)> {
    let total = Stopwatch::start();
    let eq = build_operator(&problem.op, decomp, backend, mode)?;
    let timings = eq.timings();
    let f = eq.equivalent_load(&problem.data)?;
    let width = decomp.width().unwrap_or(0.0);
    let tol = gmres_spec.tol(width);
    let sw = Stopwatch::start();
    let res = gmres(
        |u| eq.apply(u),
        &f,
        None,
        &GmresOptions {
            tol,
            max_iter: gmres_spec.max_iter,
            restart: gmres_spec.restart,
        },
    )?;
    let t_gmres = sw.seconds();
    if res.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("GMRES produced a non-finite iterate".into()));
    }
    let r = eq.apply(&res.x)?;
    let fnorm = norm2(&f);
    let residual = if fnorm == 0.0 {
        0.0
    } else {
        norm2(&f.iter().zip(&r).map(|(a, b)| a - b).collect::<Vec<_>>()) / fnorm
    };

    let (mut n_total, mut volume_error, mut global_error) = (None, None, None);
    if decomp.topology() == Topology::Open && (problem.reference.is_some() || opts.global_check) {
        let global = assemble(&problem.op, decomp.domain(), backend)?;
        n_total = Some(global.interior().len());
        let rec = eq.reconstruct(&problem.data, &res.x)?;
        let u = rec.values_on(&global)?;
        if let Some(reference) = &problem.reference {
            let dim = global.dim();
            let (mut err, mut scale) = (0.0f64, 0.0f64);
            for (d, ud) in u.iter().enumerate() {
                let x = global.point(d);
                let v = (reference.solution)(&x[..dim]);
                err = err.max((ud - v).abs());
                scale = scale.max(v.abs());
            }
            volume_error = Some(err / scale.max(f64::MIN_POSITIVE));
        }
        if opts.global_check {
            let ug = solve_dirichlet(&global, &problem.data)?;
            let mut err = 0.0f64;
            let mut scale = 0.0f64;
            for d in 0..global.n_dofs() {
                if global.kind(d) != RowKind::Dirichlet {
                    err = err.max((u[d] - ug[d]).abs());
                }
                scale = scale.max(ug[d].abs());
            }
            global_error = Some(err / scale.max(f64::MIN_POSITIVE));
        }
    } else if decomp.topology() == Topology::Open {
        n_total = Some(assemble(&problem.op, decomp.domain(), backend)?.interior().len());
    }

    let (mode_name, k, probe_error) = match mode {
        BlockMode::Dense => ("dense".to_string(), 0, None),
        BlockMode::Hbs(cfg) => {
            let p = if opts.probes > 0 {
                Some(eq.verify_probes(opts.probes, opts.probe_seed)?.max_relative_error)
            } else {
                None
            };
            ("hbs".to_string(), cfg.k, p)
        }
    };
    let dense_reals: usize = eq.blocks().map(|(_, _, b)| b.nrows() * b.ncols()).sum();
    let row = SolveRow {
        width,
        n_ds: decomp.n_ds(),
        backend,
        mode: mode_name,
        k,
        n_total,
        n_gamma: eq.n(),
        storage_rate: eq.stored_reals() as f64 / dense_reals.max(1) as f64,
        iterations: res.iterations,
        converged: res.converged,
        tol,
        residual,
        volume_error,
        global_error,
        probe_error,
        t_a: timings.assemble + timings.factor,
        t_yz: timings.sample,
        t_hbs: timings.compress,
        t_gmres,
        t_total: total.seconds(),
        interface: res.x,
    };
    Ok((row, eq))
}

fn modes(cfg: &ExperimentConfig, with_dense: bool) -> Vec<BlockMode> {
    let mut out = Vec::new();
    if with_dense || !cfg.hbs.enabled {
        out.push(BlockMode::Dense);
    }
    if cfg.hbs.enabled {
        out.extend(cfg.hbs.k.iter().map(|&k| BlockMode::Hbs(cfg.hbs.config(k))));
    }
    out
}

fn solve_options(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        probes: cfg.study.probes,
        probe_seed: cfg.hbs.seed ^ 0x9e37_79b9,
        global_check: cfg.study.global_check,
    }
}

fn describe(row: &SolveRow) -> String {
    let mut s = format!(
        "{} H={:.5} n_gamma={} {}{} iterations={} residual={:.2e}",
        row.backend.name(),
        row.width,
        row.n_gamma,
        row.mode,
        if row.k > 0 { format!("(k={})", row.k) } else { String::new() },
        row.iterations,
        row.residual
    );
    if let Some(e) = row.global_error {
        s += &format!(" global_error={e:.2e}");
    }
    if let Some(e) = row.volume_error {
        s += &format!(" volume_error={e:.2e}");
    }
    if let Some(e) = row.probe_error {
        s += &format!(" probe_error={e:.2e}");
    }
    s
}

/// Dense blocks and every configured HBS rank on each discretization.
pub(super) fn smoke(cfg: &ExperimentConfig) -> Result<(Vec<Table>, Vec<String>)> {
    sweep(cfg, true)
}

/// Cartesian product of slab widths, discretizations and block modes.
pub(super) fn solve_sweep(cfg: &ExperimentConfig) -> Result<(Vec<Table>, Vec<String>)> {
    sweep(cfg, false)
}

fn sweep(cfg: &ExperimentConfig, with_dense: bool) -> Result<(Vec<Table>, Vec<String>)> {
    let problem = cfg.problem.build()?;
    let region = cfg.problem.region()?;
    let mut table = Table::new("solve", SOLVE_COLUMNS);
    let mut summary = Vec::new();
    for &w in &cfg.decomp.widths {
        let decomp = cfg.decomp.decompose(&region, w)?;
        for backend in cfg.disc.backends(&region) {
            for mode in modes(cfg, with_dense) {
                let (row, _) = solve_once(&problem, &decomp, backend, mode, &cfg.gmres, &solve_options(cfg))?;
                summary.push(describe(&row));
                table.push(row.cells(cfg.problem.preset.name()));
            }
        }
    }
    Ok((vec![table], summary))
}

/// Values of an interface solution at fixed points on every interface:
/// `samples` equispaced points inside each transverse cell of height
/// `cell`, interpolated from the interface nodes inside that cell. Only
/// 1D interfaces (2D problems) are supported.
pub fn interface_samples(eq: &EquilibriumOperator, u: &[f64], cell: f64, samples: usize) -> Result<Vec<f64>> {
    let sets = eq.index_sets();
    let mut out = Vec::new();
    for j in 0..eq.decomposition().n_ds() {
        let pts = eq.interface_points(j);
        let vals = &u[sets.range(j)];
        let len = eq.decomposition().domain().len(1);
        let cells = (len / cell).round() as usize;
        let mut groups: Vec<Vec<(f64, f64)>> = vec![Vec::new(); cells];
        for (p, v) in pts.iter().zip(vals) {
            let c = ((p[0] / cell).floor() as usize).min(cells - 1);
            groups[c].push((p[0], *v));
        }
        for (c, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::invalid(format!("interface {j} has no nodes in cell {c}")));
            }
            for s in 0..samples {
                let y = (c as f64 + (s as f64 + 0.5) / samples as f64) * cell;
                out.push(lagrange(g, y));
            }
        }
    }
    Ok(out)
}

fn lagrange(nodes: &[(f64, f64)], y: f64) -> f64 {
    let mut sum = 0.0;
    for (i, &(xi, vi)) in nodes.iter().enumerate() {
        let mut l = 1.0;
        for (m, &(xm, _)) in nodes.iter().enumerate() {
            if m != i {
                l *= (y - xm) / (xi - xm);
            }
        }
        sum += l * vi;
    }
    sum
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

const REF_MAGIC: &[u8; 8] = b"SLABREF1";

fn read_reference(path: &Path) -> Option<Vec<f64>> {
    let bytes = fs::read(path).ok()?;
    if bytes.len() < 16 || &bytes[..8] != REF_MAGIC {
        return None;
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().ok()?) as usize;
    if bytes.len() != 16 + 8 * n {
        return None;
    }
    Some(
        bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    )
}

fn write_reference(path: &Path, v: &[f64]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = Vec::with_capacity(16 + 8 * v.len());
    bytes.extend_from_slice(REF_MAGIC);
    bytes.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Reference interface samples at `study.reference_p`: dense blocks and a
/// direct dense solve of `I - S`, cached under `<output>/cache`.
fn reference_samples(cfg: &ExperimentConfig, problem: &Problem, decomp: &SlabDecomposition) -> Result<(Vec<f64>, PathBuf, bool)> {
    let region = cfg.problem.region()?;
    let cell = region.len(1) / cfg.disc.tiling[1] as f64;
    let key = format!(
        "{:?}|{}|{:?}|{:?}|{:?}|{}|{}",
        cfg.problem.preset,
        cfg.problem.kappa,
        cfg.problem.bumps,
        cfg.problem.domain,
        cfg.disc.tiling,
        decomp.width().unwrap_or(0.0),
        cfg.study.reference_p
    );
    let key = format!("{key}|{}", cfg.study.samples_per_cell);
    let path = cfg.output.join("cache").join(format!("selfconv_{:016x}.bin", fnv1a(&key)));
    if let Some(v) = read_reference(&path) {
        return Ok((v, path, true));
    }
    let backend = cfg.disc.hps(&region, cfg.study.reference_p);
    let eq = build_operator(&problem.op, decomp, backend, BlockMode::Dense)?;
    let f = eq.equivalent_load(&problem.data)?;
    let n = eq.n();
    let a = Mat::<f64>::identity(n, n) - eq.s_dense();
    let rhs = Mat::from_fn(n, 1, |i, _| f[i]);
    let u = a.partial_piv_lu().solve(&rhs);
    let u: Vec<f64> = (0..n).map(|i| u[(i, 0)]).collect();
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("reference solve produced non-finite values".into()));
    }
    let samples = interface_samples(&eq, &u, cell, cfg.study.samples_per_cell)?;
    write_reference(&path, &samples)?;
    Ok((samples, path, false))
}

/// Self-convergence in `p` against a cached high-order reference.
pub(super) fn self_convergence(cfg: &ExperimentConfig) -> Result<(Vec<Table>, Vec<String>)> {
    let problem = cfg.problem.build()?;
    let region = cfg.problem.region()?;
    let cell = region.len(1) / cfg.disc.tiling[1] as f64;
    let mut table = Table::new(
        "selfconv",
        &[
            "problem", "H", "p", "mode", "k", "N", "n_gamma", "storage_rate", "iterations", "converged", "tol",
            "residual", "probe_error", "floor", "error", "t_A", "t_YZ", "t_HBS", "t_gmres", "t_total",
        ],
    );
    let mut summary = Vec::new();
    for &w in &cfg.decomp.widths {
        let decomp = cfg.decomp.decompose(&region, w)?;
        let (reference, path, cached) = reference_samples(cfg, &problem, &decomp)?;
        summary.push(format!(
            "reference p={} {} {}",
            cfg.study.reference_p,
            if cached { "loaded from" } else { "written to" },
            path.display()
        ));
        let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut ps = cfg.disc.p.clone();
        ps.sort_unstable();
        for p in ps {
            let backend = cfg.disc.hps(&region, p);
            for mode in modes(cfg, false) {
                let (row, eq) = solve_once(&problem, &decomp, backend, mode, &cfg.gmres, &solve_options(cfg))?;
                let s = interface_samples(&eq, &row.interface, cell, cfg.study.samples_per_cell)?;
                let err = s.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
                let floor = row.probe_error.unwrap_or(0.0).max(row.tol);
                summary.push(format!("p={p} {} error={err:.3e} floor={floor:.2e} iterations={}", row.mode, row.iterations));
                table.push(vec![
                    cfg.problem.preset.name().into(),
                    w.into(),
                    p.into(),
                    row.mode.as_str().into(),
                    row.k.into(),
                    row.n_total.map(Cell::from).unwrap_or(Cell::Float(f64::NAN)),
                    row.n_gamma.into(),
                    row.storage_rate.into(),
                    row.iterations.into(),
                    row.converged.into(),
                    row.tol.into(),
                    row.residual.into(),
                    row.probe_error.unwrap_or(f64::NAN).into(),
                    floor.into(),
                    err.into(),
                    row.t_a.into(),
                    row.t_yz.into(),
                    row.t_hbs.into(),
                    row.t_gmres.into(),
                    row.t_total.into(),
                ]);
            }
        }
    }
    Ok((vec![table], summary))
}
