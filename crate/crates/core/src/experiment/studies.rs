//! Runners that inspect operators rather than solve problems.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ExperimentConfig, Table};

use crate::analysis::{
    admissible_ranks, interface_dofs, norm2, loglog_slope, normality_report, red_black_projections, schur_columns, schur_reduce, spectrum,
    spd_s_eigenvalues, weighted,
};
use crate::dense::{frobenius, gaussian};
use crate::discretize::{assemble, Backend};
use crate::equilibrium::{build_operator, BlockMode, EquilibriumOperator};
use crate::error::{Error, Result};
use crate::hbs::{build_tree, compress, Arity};
use crate::problem::Problem;
use crate::slabs::SlabDecomposition;
use crate::timing::Stopwatch;

type Out = Result<(Vec<Table>, Vec<String>)>;

fn rel(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    frobenius((a - b).as_ref()) / frobenius(b.as_ref()).max(f64::MIN_POSITIVE)
}

/// `I - S`, rescaled by the interface quadrature weights for spectral
/// discretizations.
fn system_matrix(eq: &EquilibriumOperator) -> Mat<f64> {
    let n = eq.n();
    let m = Mat::<f64>::identity(n, n) - eq.s_dense();
    match eq.backend() {
        Backend::Fd { .. } => m,
        Backend::Hps { .. } => weighted(m.as_ref(), &eq.weights()),
    }
}

fn backend_h_p(b: &Backend) -> (f64, usize) {
    match *b {
        Backend::Fd { h } => (h, 0),
        Backend::Hps { p, .. } => (f64::NAN, p),
    }
}

/// Locally built dense blocks against `-T_jj^{-1} T_jj'` from the global
/// Schur complement.
pub(super) fn oracle_equivalence(cfg: &ExperimentConfig) -> Out {
    let region = cfg.problem.region()?;
    let mut table = Table::new(
        "blocks",
        &["case", "backend", "h", "p", "H", "j", "jp", "rows", "cols", "rel_diff", "t_case"],
    );
    let mut summary = Vec::new();
    for case in cfg.cases() {
        let problem = cfg.problem.build_case(&case)?;
        for &w in &cfg.decomp.widths {
            let decomp = cfg.decomp.decompose(&region, w)?;
            for backend in cfg.disc.backends(&region) {
                let sw = Stopwatch::start();
                let eq = build_operator(&problem.op, &decomp, backend, BlockMode::Dense)?;
                let global = assemble(&problem.op, &region, backend)?;
                let red = schur_reduce(&global, &interface_dofs(&global, decomp.interfaces())?)?;
                let (h, p) = backend_h_p(&backend);
                let mut worst = 0.0f64;
                let mut rows = Vec::new();
                for (j, jp, block) in eq.blocks() {
                    let local = block.to_dense();
                    let oracle = red.s_block(j, jp);
                    if local.nrows() != oracle.nrows() || local.ncols() != oracle.ncols() {
                        return Err(Error::DimensionMismatch {
                            context: "local block vs Schur oracle",
                            expected: oracle.nrows() * oracle.ncols(),
                            got: local.nrows() * local.ncols(),
                        });
                    }
                    let d = rel(&local, &oracle);
                    worst = worst.max(d);
                    rows.push((j, jp, local.nrows(), local.ncols(), d));
                }
                let t = sw.seconds();
                for (j, jp, r, c, d) in rows {
                    table.push(vec![
                        case.label().into(),
                        backend.name().into(),
                        h.into(),
                        p.into(),
                        w.into(),
                        j.into(),
                        jp.into(),
                        r.into(),
                        c.into(),
                        d.into(),
                        t.into(),
                    ]);
                }
                summary.push(format!(
                    "{} {} H={w} n_ds={}: max relative block difference {worst:.2e}",
                    case.label(),
                    backend.name(),
                    decomp.n_ds()
                ));
            }
        }
    }
    Ok((vec![table], summary))
}

/// Red-black projections and the spectrum of `S` on an SPD problem.
pub(super) fn red_black(cfg: &ExperimentConfig) -> Out {
    let problem = cfg.problem.build()?;
    let region = cfg.problem.region()?;
    let mut table = Table::new(
        "projections",
        &[
            "backend", "h", "p", "H", "n_gamma", "idempotency_red", "idempotency_black", "self_adjoint_red",
            "self_adjoint_black", "sum_defect", "lambda_min", "rho_s", "kappa_rho", "t_case",
        ],
    );
    let mut summary = Vec::new();
    for backend in cfg.disc.backends(&region) {
        let (mut inv_h, mut kappas) = (Vec::new(), Vec::new());
        for &w in &cfg.decomp.widths {
            let sw = Stopwatch::start();
            let decomp = cfg.decomp.decompose(&region, w)?;
            let global = assemble(&problem.op, &region, backend)?;
            let red = schur_reduce(&global, &interface_dofs(&global, decomp.interfaces())?)?;
            let rb = red_black_projections(&red)?;
            let eig = spd_s_eigenvalues(&red)?;
            let (lo, hi) = (eig[0], eig[eig.len() - 1]);
            let kappa = hi / lo;
            let (h, p) = backend_h_p(&backend);
            table.push(vec![
                backend.name().into(),
                h.into(),
                p.into(),
                w.into(),
                red.n().into(),
                rb.idempotency[0].into(),
                rb.idempotency[1].into(),
                rb.self_adjointness[0].into(),
                rb.self_adjointness[1].into(),
                rb.sum_defect.into(),
                lo.into(),
                hi.into(),
                kappa.into(),
                sw.seconds().into(),
            ]);
            summary.push(format!(
                "H={w}: idempotency {:.1e}/{:.1e}, self-adjointness {:.1e}/{:.1e}, rho(S)={hi:.12}, kappa={kappa:.3}",
                rb.idempotency[0], rb.idempotency[1], rb.self_adjointness[0], rb.self_adjointness[1]
            ));
            inv_h.push(1.0 / w);
            kappas.push(kappa);
        }
        if inv_h.len() > 1 {
            summary.push(format!("{}: slope of log kappa vs log(1/H) = {:.3}", backend.name(), loglog_slope(&inv_h, &kappas)));
        }
    }
    Ok((vec![table], summary))
}

fn central_interface(decomp: &SlabDecomposition) -> Result<usize> {
    let xs = decomp.interfaces();
    let mid = decomp.domain().lo[0] + 0.5 * decomp.domain().len(0);
    let j = (0..xs.len())
        .min_by(|&a, &b| (xs[a] - mid).abs().total_cmp(&(xs[b] - mid).abs()))
        .ok_or_else(|| Error::invalid("no interfaces"))?;
    if j == 0 {
        return Err(Error::invalid("the central interface needs a lower neighbour (use at least 3 interfaces)"));
    }
    Ok(j)
}

/// Block symmetry defect, eigenvalue/singular value gap and condition
/// numbers over a sweep of slab widths.
pub(super) fn normality(cfg: &ExperimentConfig) -> Out {
    let problem = cfg.problem.build()?;
    let region = cfg.problem.region()?;
    let mut table = Table::new(
        "normality",
        &[
            "backend", "h", "p", "H", "n_gamma", "j", "x_j", "block_difference", "lambda_sigma", "kappa_rho",
            "kappa_2", "ratio_minus_one", "t_case",
        ],
    );
    let mut summary = Vec::new();
    let mut by_backend: Vec<Backend> = Vec::new();
    for kind in &cfg.disc.backends {
        let b = match kind {
            super::BackendKind::Fd => Backend::Fd { h: cfg.disc.h[0] },
            super::BackendKind::Hps => cfg.disc.hps(&region, cfg.disc.p[0]),
        };
        by_backend.push(b);
    }
    for backend in by_backend {
        let (mut hs, mut bd, mut ls) = (Vec::new(), Vec::new(), Vec::new());
        for &w in &cfg.decomp.widths {
            let sw = Stopwatch::start();
            let decomp = cfg.decomp.decompose(&region, w)?;
            let eq = build_operator(&problem.op, &decomp, backend, BlockMode::Dense)?;
            let j = central_interface(&decomp)?;
            let s = system_matrix(&eq);
            let r = normality_report(s.as_ref(), &eq.index_sets().offsets, j)?;
            let (h, p) = backend_h_p(&backend);
            table.push(vec![
                backend.name().into(),
                h.into(),
                p.into(),
                w.into(),
                eq.n().into(),
                j.into(),
                decomp.interfaces()[j].into(),
                r.block_difference.into(),
                r.lambda_sigma.into(),
                r.kappa_rho.into(),
                r.kappa_2.into(),
                r.ratio_minus_one().into(),
                sw.seconds().into(),
            ]);
            hs.push(w);
            bd.push(r.block_difference);
            ls.push(r.lambda_sigma);
        }
        if hs.len() > 1 {
            summary.push(format!(
                "{}: block difference slope {:.3}, lambda-sigma slope {:.3}",
                backend.name(),
                loglog_slope(&hs, &bd),
                loglog_slope(&hs, &ls)
            ));
        }
    }
    Ok((vec![table], summary))
}

/// Largest `max_i min_k |conj(l_i) - l_k|` relative to the spectral radius.
fn conjugate_defect(eig: &[faer::c64]) -> f64 {
    let rho = eig.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    eig.iter()
        .map(|z| {
            eig.iter()
                .map(|w| ((z.re - w.re).powi(2) + (z.im + w.im).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max)
        / rho
}

/// Eigenvalues of `I - S` for each case at the first slab width and
/// discretization.
pub(super) fn spectrum_gallery(cfg: &ExperimentConfig) -> Out {
    let region = cfg.problem.region()?;
    let w = cfg.decomp.widths[0];
    let decomp = cfg.decomp.decompose(&region, w)?;
    let backend = *cfg
        .disc
        .backends(&region)
        .first()
        .ok_or_else(|| Error::invalid("no discretization configured"))?;
    let mut eigen = Table::new("eigenvalues", &["case", "index", "re", "im"]);
    let mut stats = Table::new(
        "spectrum",
        &[
            "case", "backend", "H", "n_gamma", "max_abs_imag", "min_re", "max_re", "rho", "below_zero", "above_two",
            "conjugate_defect", "t_case",
        ],
    );
    let mut summary = Vec::new();
    for case in cfg.cases() {
        let sw = Stopwatch::start();
        let problem: Problem = cfg.problem.build_case(&case)?;
        let eq = build_operator(&problem.op, &decomp, backend, BlockMode::Dense)?;
        let mut eig = spectrum(system_matrix(&eq).as_ref())?;
        eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        for (i, z) in eig.iter().enumerate() {
            eigen.push(vec![case.label().into(), i.into(), z.re.into(), z.im.into()]);
        }
        let max_imag = eig.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
        let min_re = eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let max_re = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let rho = eig.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        let below = eig.iter().filter(|z| z.re < 0.0).count();
        let above = eig.iter().filter(|z| z.re > 2.0).count();
        let conj = conjugate_defect(&eig);
        stats.push(vec![
            case.label().into(),
            backend.name().into(),
            w.into(),
            eq.n().into(),
            max_imag.into(),
            min_re.into(),
            max_re.into(),
            rho.into(),
            below.into(),
            above.into(),
            conj.into(),
            sw.seconds().into(),
        ]);
        summary.push(format!(
            "{}: n={} re in [{min_re:.6}, {max_re:.6}], max |im| {max_imag:.2e}, {below} below 0, {above} above 2, conjugate defect {conj:.1e}",
            case.label(),
            eq.n()
        ));
    }
    Ok((vec![stats, eigen], summary))
}

/// Spectral radii of the global interface Schur complement `T` and of
/// `I - S` across the discretization sweep.
pub(super) fn t_spectrum_growth(cfg: &ExperimentConfig) -> Out {
    let problem = cfg.problem.build()?;
    let region = cfg.problem.region()?;
    let w = cfg.decomp.widths[0];
    let decomp = cfg.decomp.decompose(&region, w)?;
    let mut table = Table::new("growth", &["backend", "h", "p", "H", "n_gamma", "rho_t", "rho_s", "t_case"]);
    let mut summary = Vec::new();
    let (mut fd, mut hps) = (Vec::new(), Vec::new());
    for backend in cfg.disc.backends(&region) {
        let sw = Stopwatch::start();
        let global = assemble(&problem.op, &region, backend)?;
        let red = schur_reduce(&global, &interface_dofs(&global, decomp.interfaces())?)?;
        let rho_t = spectrum(red.t.as_ref())?.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        let eq = build_operator(&problem.op, &decomp, backend, BlockMode::Dense)?;
        let rho_s = spectrum(system_matrix(&eq).as_ref())?.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        let (h, p) = backend_h_p(&backend);
        table.push(vec![
            backend.name().into(),
            h.into(),
            p.into(),
            w.into(),
            red.n().into(),
            rho_t.into(),
            rho_s.into(),
            sw.seconds().into(),
        ]);
        match backend {
            Backend::Fd { h } => fd.push((1.0 / h, rho_t)),
            Backend::Hps { p, .. } => hps.push((p as f64, rho_t)),
        }
        summary.push(format!("{} h={h} p={p}: rho(T)={rho_t:.4e} rho(S)={rho_s:.10}", backend.name()));
    }
    for (name, pts) in [("fd (vs 1/h)", fd), ("hps (vs p)", hps)] {
        if pts.len() > 1 {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            summary.push(format!("{name}: rho(T) slope {:.3}", loglog_slope(&x, &y)));
        }
    }
    Ok((vec![table], summary))
}

/// Number of transverse points per cluster-tree leaf: one HPS cell, or the
/// configured leaf size for finite differences.
fn rank_leaf(cfg: &ExperimentConfig, backend: &Backend, n: usize, dim: usize) -> usize {
    match *backend {
        Backend::Hps { p, .. } => (p - 2).pow(dim as u32 - 1),
        Backend::Fd { .. } => cfg.hbs.leaf.unwrap_or_else(|| (n / 16).max(2)),
    }
}

/// Weak- and strong-admissibility ranks of `S_{1,0}`, `T_{1,1}` and
/// `T_{1,0}` on the cluster tree of interface 1.
pub(super) fn rank_study(cfg: &ExperimentConfig) -> Out {
    let problem = cfg.problem.build()?;
    let region = cfg.problem.region()?;
    let dim = region.dim;
    let w = cfg.decomp.widths[0];
    let decomp = cfg.decomp.decompose(&region, w)?;
    if decomp.n_ds() < 2 {
        return Err(Error::invalid("rank study needs at least two interfaces"));
    }
    let arity = if dim == 3 { Arity::Quad } else { Arity::Binary };
    let mut table = Table::new(
        "ranks",
        &[
            "backend", "h", "p", "H", "n", "matrix", "level", "admissibility", "clusters", "max_rank", "mean_rank",
            "t_case",
        ],
    );
    let mut summary = Vec::new();
    for backend in cfg.disc.backends(&region) {
        let sw = Stopwatch::start();
        let eq = build_operator(&problem.op, &decomp, backend, BlockMode::Dense)?;
        let s10 = eq
            .block(1, 0)
            .ok_or_else(|| Error::invalid("operator has no block (1, 0)"))?
            .to_dense();
        let global = assemble(&problem.op, &region, backend)?;
        let ifaces = interface_dofs(&global, decomp.interfaces())?;
        let t = schur_columns(&global, &ifaces, &[0, 1])?;
        let (o1, n0, n1) = (ifaces[0].len(), ifaces[0].len(), ifaces[1].len());
        let t11 = t.as_ref().submatrix(o1, n0, n1, n1).to_owned();
        let t10 = t.as_ref().submatrix(o1, 0, n1, n0).to_owned();
        let pts = eq.interface_points(1);
        let leaf = rank_leaf(cfg, &backend, pts.len(), dim);
        let tree = build_tree(pts, dim - 1, arity, leaf)?;
        let (h, p) = backend_h_p(&backend);
        let mut found = Vec::new();
        for (name, m) in [("S_10", &s10), ("T_11", &t11), ("T_10", &t10)] {
            for &level in &cfg.study.levels {
                if level > tree.depth() {
                    continue;
                }
                for strong in [false, true] {
                    let tol = if cfg.study.rank_relative {
                        cfg.study.rank_tol * norm2(m.as_ref())?
                    } else {
                        cfg.study.rank_tol
                    };
                    let r = admissible_ranks(m.as_ref(), &tree, dim - 1, level, strong, tol)?;
                    if r.clusters.is_empty() {
                        continue;
                    }
                    found.push((name, level, strong, r.clusters.len(), r.max(), r.mean()));
                }
            }
        }
        let t_case = sw.seconds();
        for (name, level, strong, clusters, max, mean) in found {
            table.push(vec![
                backend.name().into(),
                h.into(),
                p.into(),
                w.into(),
                pts.len().into(),
                name.into(),
                level.into(),
                if strong { "strong" } else { "weak" }.into(),
                clusters.into(),
                max.into(),
                mean.into(),
                t_case.into(),
            ]);
            summary.push(format!(
                "{} p={p}: {name} level {level} {}: max rank {max}, mean {mean:.1}",
                backend.name(),
                if strong { "strong" } else { "weak" }
            ));
        }
    }
    Ok((vec![table], summary))
}

/// Compresses one dense-built block at every configured rank.
pub(super) fn hbs_error(cfg: &ExperimentConfig) -> Out {
    let problem = cfg.problem.build()?;
    let region = cfg.problem.region()?;
    let w = cfg.decomp.widths[0];
    let decomp = cfg.decomp.decompose(&region, w)?;
    let backend = *cfg
        .disc
        .backends(&region)
        .first()
        .ok_or_else(|| Error::invalid("no discretization configured"))?;
    let eq = build_operator(&problem.op, &decomp, backend, BlockMode::Dense)?;
    let (j, jp) = if decomp.n_ds() > 1 { (1, 0) } else { (0, 0) };
    let block = eq
        .block(j, jp)
        .ok_or_else(|| Error::invalid(format!("operator has no block ({j}, {jp})")))?
        .to_dense();
    let pts = eq.interface_points(j).to_vec();
    let interface_dim = region.dim - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.hbs.seed.wrapping_add(1));
    let probes = gaussian(block.ncols(), cfg.study.probes.max(1), &mut rng);
    let exact = &block * &probes;
    let mut table = Table::new(
        "hbs",
        &[
            "n", "k", "samples", "leaf", "depth", "rel_error", "frobenius_error", "storage_rate", "stored",
            "deterministic", "t_compress",
        ],
    );
    let mut summary = Vec::new();
    for &k in &cfg.hbs.k {
        let hcfg = cfg.hbs.config(k);
        let run = || {
            compress(
                |x| Ok(&block * x),
                |x| Ok(block.transpose() * x),
                &pts,
                interface_dim,
                &hcfg,
            )
        };
        let sw = Stopwatch::start();
        let h = run()?;
        let t = sw.seconds();
        let again = run()?;
        let dense = h.to_dense();
        let deterministic = dense == again.to_dense();
        let err = rel(&h.apply(probes.as_ref()), &exact);
        let ferr = rel(&dense, &block);
        let st = h.storage_report();
        table.push(vec![
            block.nrows().into(),
            k.into(),
            hcfg.samples().into(),
            hcfg.leaf().into(),
            st.depth.into(),
            err.into(),
            ferr.into(),
            st.rate.into(),
            st.stored.into(),
            deterministic.into(),
            t.into(),
        ]);
        summary.push(format!(
            "k={k}: matvec error {err:.3e}, storage rate {:.3}, depth {}, deterministic {deterministic}",
            st.rate, st.depth
        ));
    }
    Ok((vec![table], summary))
}
