//! The equilibrium operator on slab interfaces.
//!
//! Double slab `j` is solved with zero data except on one outer face; the
//! response on its central interface defines the block `S_{j,j'}`. The
//! interface values of the global solution satisfy `(I - S) u = f`, where
//! `f` collects the central responses to the physical data alone.

use std::cell::Cell;
use std::io::Write;
use std::path::Path;

use faer::{Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::{frobenius, gaussian, select_rows};
use crate::discretize::{assemble, Backend, RowKind, SparseSystem};
use crate::error::{Error, Result};
use crate::hbs::{compress, HbsConfig, HbsMatrix, StorageReport};
use crate::par::map_indexed;
use crate::problem::{BoundaryData, EllipticOperator};
use crate::slabs::{index_sets, IndexSets, LocalIndex, SlabDecomposition, Topology};
use crate::sparse::{factorize, FactorStats, InteriorFactorization};
use crate::timing::Stopwatch;

/// Columns per local solve when forming dense blocks.
const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockMode {
    Dense,
    Hbs(HbsConfig),
}

#[derive(Debug, Clone)]
pub enum Block {
    Dense(Mat<f64>),
    Hbs(HbsMatrix),
}

impl Block {
    pub fn nrows(&self) -> usize {
        match self {
            Block::Dense(m) => m.nrows(),
            Block::Hbs(h) => h.n(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Block::Dense(m) => m.ncols(),
            Block::Hbs(h) => h.n(),
        }
    }

    pub fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        match self {
            Block::Dense(m) => m * x,
            Block::Hbs(h) => h.apply(x),
        }
    }

    pub fn apply_adjoint(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        match self {
            Block::Dense(m) => m.transpose() * x,
            Block::Hbs(h) => h.apply_adjoint(x),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match self {
            Block::Dense(m) => m.clone(),
            Block::Hbs(h) => h.to_dense(),
        }
    }

    pub fn stored(&self) -> usize {
        match self {
            Block::Dense(m) => m.nrows() * m.ncols(),
            Block::Hbs(h) => h.storage_report().stored,
        }
    }

    pub fn storage(&self) -> Option<StorageReport> {
        match self {
            Block::Dense(_) => None,
            Block::Hbs(h) => Some(h.storage_report()),
        }
    }
}

/// Assembled and factorized double slab.
#[derive(Debug)]
pub struct LocalSlab {
    pub system: SparseSystem,
    pub factor: InteriorFactorization,
    pub index: LocalIndex,
}

impl LocalSlab {
    fn face(&self, neighbor: usize) -> Option<usize> {
        self.index.outer.iter().position(|f| f.neighbor == neighbor)
    }

    fn face_cols(&self, face: usize) -> Vec<usize> {
        let b = self.system.boundary();
        self.index.outer[face].positions.iter().map(|&p| b[p]).collect()
    }

    /// `-R_C A(I,I)^{-1} A(I, J_face) X`.
    pub fn apply_exact(&self, face: usize, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let a = self.system.block(self.system.interior(), &self.face_cols(face));
        let rhs = a.mul_dense(&x.to_owned());
        let sol = self.factor.solve_mat(&rhs)?;
        Ok(-select_rows(sol.as_ref(), &self.index.center))
    }

    /// `-A(I, J_face)^T A(I,I)^{-T} R_C^T X`.
    pub fn apply_exact_adjoint(&self, face: usize, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let a = self.system.block(self.system.interior(), &self.face_cols(face));
        let mut rhs = Mat::<f64>::zeros(self.factor.n(), x.ncols());
        for (r, &c) in self.index.center.iter().enumerate() {
            for k in 0..x.ncols() {
                rhs[(c, k)] = x[(r, k)];
            }
        }
        let sol = self.factor.solve_adjoint_mat(&rhs)?;
        Ok(-a.mul_dense_transpose(&sol))
    }

    fn dense_block(&self, face: usize) -> Result<Mat<f64>> {
        let cols = self.face_cols(face);
        let a = self.system.block(self.system.interior(), &cols);
        let m = cols.len();
        let mut out = Mat::<f64>::zeros(self.index.center.len(), m);
        let mut start = 0;
        while start < m {
            let w = CHUNK.min(m - start);
            let rhs = Mat::from_fn(a.nrows(), w, |i, j| a.get(i, start + j));
            let sol = self.factor.solve_mat(&rhs)?;
            for (r, &c) in self.index.center.iter().enumerate() {
                for j in 0..w {
                    out[(r, start + j)] = -sol[(c, j)];
                }
            }
            start += w;
        }
        Ok(out)
    }
}

/// Accumulated build times in seconds, summed over slabs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuildTimings {
    pub assemble: f64,
    /// Sparse factorization of the double slabs.
    pub factor: f64,
    /// Local solves that produce samples or dense columns.
    pub sample: f64,
    /// Compression work beyond the samples.
    pub compress: f64,
    pub wall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub probes: usize,
    /// Largest relative Frobenius error over all blocks.
    pub max_relative_error: f64,
}

pub struct EquilibriumOperator {
    decomp: SlabDecomposition,
    backend: Backend,
    op: EllipticOperator,
    sets: IndexSets,
    slabs: Vec<LocalSlab>,
    blocks: Vec<Vec<(usize, Block)>>,
    points: Vec<Vec<[f64; 2]>>,
    weights: Vec<Vec<f64>>,
    timings: BuildTimings,
}

impl std::fmt::Debug for EquilibriumOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EquilibriumOperator")
            .field("decomp", &self.decomp.summary())
            .field("backend", &self.backend)
            .field("n", &self.n())
            .finish()
    }
}

fn periodic_op(op: &EllipticOperator, decomp: &SlabDecomposition) -> EllipticOperator {
    match decomp.topology() {
        Topology::Open => op.clone(),
        Topology::Periodic => op.periodic_in_x(decomp.domain().lo[0], decomp.domain().len(0)),
    }
}

fn periodic_data(data: &BoundaryData, decomp: &SlabDecomposition) -> BoundaryData {
    match decomp.topology() {
        Topology::Open => data.clone(),
        Topology::Periodic => data.periodic_in_x(decomp.domain().lo[0], decomp.domain().len(0)),
    }
}

/// Assembles and factorizes every double slab, then forms the blocks.
pub fn build_operator(
    op: &EllipticOperator,
    decomp: &SlabDecomposition,
    backend: Backend,
    mode: BlockMode,
) -> Result<EquilibriumOperator> {
    let wall = Stopwatch::start();
    decomp.check_backend(&backend)?;
    if let BlockMode::Hbs(cfg) = mode {
        cfg.validate()?;
    }
    let op = periodic_op(op, decomp);
    let n = decomp.n_ds();
    let built = map_indexed(n, |j| {
        let t = Stopwatch::start();
        let system = assemble(&op, &decomp.double_slab(j), backend).map_err(|e| e.in_slab(j))?;
        let t_asm = t.seconds();
        let t = Stopwatch::start();
        let factor = factorize(&system).map_err(|e| e.in_slab(j))?;
        Ok((system, factor, t_asm, t.seconds()))
    })?;
    let mut timings = BuildTimings::default();
    let mut systems = Vec::with_capacity(n);
    let mut factors = Vec::with_capacity(n);
    for (s, f, ta, tf) in built {
        timings.assemble += ta;
        timings.factor += tf;
        systems.push(s);
        factors.push(f);
    }
    let sets = index_sets(decomp, &systems)?;
    let mut slabs = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (j, ((system, factor), index)) in systems.into_iter().zip(factors).zip(sets.local.iter().cloned()).enumerate() {
        let x = decomp.interfaces()[j];
        let dofs = system.plane_dofs(x)?;
        points.push(dofs.iter().map(|&d| {
            let p = system.point(d);
            [p[1], p[2]]
        }).collect::<Vec<_>>());
        weights.push(system.plane_weights(x)?);
        slabs.push(LocalSlab { system, factor, index });
    }
    let interface_dim = decomp.domain().dim - 1;
    let rows = map_indexed(n, |j| {
        let slab = &slabs[j];
        let mut row = Vec::new();
        let mut t = BuildTimings::default();
        for (face, outer) in slab.index.outer.iter().enumerate() {
            let block = match mode {
                BlockMode::Dense => {
                    let sw = Stopwatch::start();
                    let b = slab.dense_block(face).map_err(|e| e.in_slab(j))?;
                    t.sample += sw.seconds();
                    Block::Dense(b)
                }
                BlockMode::Hbs(cfg) => {
                    let sampled = Cell::new(0.0);
                    let sw = Stopwatch::start();
                    let h = compress(
                        |x| {
                            let s = Stopwatch::start();
                            let r = slab.apply_exact(face, x);
                            sampled.set(sampled.get() + s.seconds());
                            r
                        },
                        |x| {
                            let s = Stopwatch::start();
                            let r = slab.apply_exact_adjoint(face, x);
                            sampled.set(sampled.get() + s.seconds());
                            r
                        },
                        &points[j],
                        interface_dim,
                        &cfg,
                    )
                    .map_err(|e| e.in_slab(j))?;
                    t.sample += sampled.get();
                    t.compress += sw.seconds() - sampled.get();
                    Block::Hbs(h)
                }
            };
            row.push((outer.neighbor, block));
        }
        Ok((row, t))
    })?;
    let mut blocks = Vec::with_capacity(n);
    for (row, t) in rows {
        timings.sample += t.sample;
        timings.compress += t.compress;
        blocks.push(row);
    }
    timings.wall = wall.seconds();
    Ok(EquilibriumOperator {
        decomp: decomp.clone(),
        backend,
        op,
        sets,
        slabs,
        blocks,
        points,
        weights,
        timings,
    })
}

impl EquilibriumOperator {
    /// Total number of interface unknowns.
    pub fn n(&self) -> usize {
        self.sets.total()
    }

    pub fn decomposition(&self) -> &SlabDecomposition {
        &self.decomp
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn index_sets(&self) -> &IndexSets {
        &self.sets
    }

    pub fn slabs(&self) -> &[LocalSlab] {
        &self.slabs
    }

    pub fn timings(&self) -> BuildTimings {
        self.timings
    }

    /// Transverse coordinates of the nodes on interface `j`.
    pub fn interface_points(&self, j: usize) -> &[[f64; 2]] {
        &self.points[j]
    }

    /// Square-root quadrature weights on interface `j`.
    pub fn interface_weights(&self, j: usize) -> &[f64] {
        &self.weights[j]
    }

    /// Square-root weights for the whole interface vector.
    pub fn weights(&self) -> Vec<f64> {
        self.weights.concat()
    }

    pub fn block(&self, j: usize, jp: usize) -> Option<&Block> {
        self.blocks[j].iter().find(|(n, _)| *n == jp).map(|(_, b)| b)
    }

    /// Nonzero blocks as `(row interface, column interface, block)`.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize, &Block)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(j, row)| row.iter().map(move |(jp, b)| (j, *jp, b)))
    }

    pub fn factor_stats(&self) -> Vec<FactorStats> {
        self.slabs.iter().map(|s| s.factor.stats()).collect()
    }

    /// Reals stored in all blocks.
    pub fn stored_reals(&self) -> usize {
        self.blocks().map(|(_, _, b)| b.stored()).sum()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch {
                context: "interface vector",
                expected: self.n(),
                got: len,
            });
        }
        Ok(())
    }

    /// `S u`.
    pub fn apply_s(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        let mut y = vec![0.0; u.len()];
        for (j, jp, b) in self.blocks() {
            let x = Mat::from_fn(self.sets.block_len(jp), 1, |i, _| u[self.sets.offsets[jp] + i]);
            let r = b.apply(x.as_ref());
            for (i, yi) in y[self.sets.range(j)].iter_mut().enumerate() {
                *yi += r[(i, 0)];
            }
        }
        Ok(y)
    }

    /// `S^T u`.
    pub fn apply_s_adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        let mut y = vec![0.0; u.len()];
        for (j, jp, b) in self.blocks() {
            let x = Mat::from_fn(self.sets.block_len(j), 1, |i, _| u[self.sets.offsets[j] + i]);
            let r = b.apply_adjoint(x.as_ref());
            for (i, yi) in y[self.sets.range(jp)].iter_mut().enumerate() {
                *yi += r[(i, 0)];
            }
        }
        Ok(y)
    }

    /// `(I - S) u`.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let su = self.apply_s(u)?;
        Ok(u.iter().zip(su).map(|(a, b)| a - b).collect())
    }

    /// `(I - S)^T u`.
    pub fn apply_adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        let su = self.apply_s_adjoint(u)?;
        Ok(u.iter().zip(su).map(|(a, b)| a - b).collect())
    }

    /// Dense `S`.
    pub fn s_dense(&self) -> Mat<f64> {
        let n = self.n();
        let mut s = Mat::<f64>::zeros(n, n);
        for (j, jp, b) in self.blocks() {
            let d = b.to_dense();
            let (r0, c0) = (self.sets.offsets[j], self.sets.offsets[jp]);
            for c in 0..d.ncols() {
                for r in 0..d.nrows() {
                    s[(r0 + r, c0 + c)] = d[(r, c)];
                }
            }
        }
        s
    }

    /// Right-hand side `f` of `(I - S) u = f` for the given data.
    pub fn equivalent_load(&self, data: &BoundaryData) -> Result<Vec<f64>> {
        let data = periodic_data(data, &self.decomp);
        let parts = map_indexed(self.slabs.len(), |j| {
            let slab = &self.slabs[j];
            let sys = &slab.system;
            let mut fb = sys.sample(&*data.dirichlet, sys.boundary());
            for face in &slab.index.outer {
                for &p in &face.positions {
                    fb[p] = 0.0;
                }
            }
            let b = sys.build_rhs_with(&data, &fb);
            let x = slab.factor.solve(&b).map_err(|e| e.in_slab(j))?;
            Ok(slab.index.center.iter().map(|&c| x[c]).collect::<Vec<f64>>())
        })?;
        Ok(parts.concat())
    }

    /// Compares every block against exact local solves on `probes` random
    /// vectors.
    pub fn verify_probes(&self, probes: usize, seed: u64) -> Result<ProbeReport> {
        let mut worst = 0.0f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (j, row) in self.blocks.iter().enumerate() {
            let slab = &self.slabs[j];
            for (jp, block) in row {
                let face = slab.face(*jp).expect("block without face");
                let x = gaussian(self.sets.block_len(*jp), probes, &mut rng);
                let exact = slab.apply_exact(face, x.as_ref())?;
                let approx = block.apply(x.as_ref());
                let denom = frobenius(exact.as_ref()).max(f64::MIN_POSITIVE);
                worst = worst.max(frobenius((&approx - &exact).as_ref()) / denom);
            }
        }
        Ok(ProbeReport {
            probes,
            max_relative_error: worst,
        })
    }

    /// Solves every single slab with the given interface values.
    pub fn reconstruct(&self, data: &BoundaryData, interface: &[f64]) -> Result<Reconstruction> {
        self.check_len(interface.len())?;
        let data = periodic_data(data, &self.decomp);
        let slabs = map_indexed(self.decomp.n_single(), |k| {
            let (region, faces) = self.decomp.single_slab(k);
            let sys = assemble(&self.op, &region, self.backend)?;
            let mut fb = sys.sample(&*data.dirichlet, sys.boundary());
            for (side, face) in faces.iter().enumerate() {
                let Some(i) = face else { continue };
                let x = if side == 0 { region.lo[0] } else { region.hi[0] };
                let vals = &interface[self.sets.range(*i)];
                let dofs = sys.plane_dofs(x)?;
                if dofs.len() != vals.len() {
                    return Err(Error::NonConforming {
                        interface: *i,
                        detail: format!("single slab {k} sees {} nodes, expected {}", dofs.len(), vals.len()),
                    });
                }
                for (&d, &v) in dofs.iter().zip(vals) {
                    let p = sys.boundary().binary_search(&d).expect("face DOF on the boundary");
                    fb[p] = v;
                }
            }
            let factor = factorize(&sys).map_err(|e| e.in_slab(k))?;
            let ui = factor.solve(&sys.build_rhs_with(&data, &fb))?;
            let mut u = vec![0.0; sys.n_dofs()];
            for (&d, v) in sys.interior().iter().zip(ui) {
                u[d] = v;
            }
            for (&d, &v) in sys.boundary().iter().zip(&fb) {
                u[d] = v;
            }
            Ok((sys, u))
        })?;
        Ok(Reconstruction { slabs, data })
    }

    /// Writes every dense block to a little-endian binary file: the magic
    /// `SLABBLK1`, the block count, then per block `j`, `j'`, rows, cols
    /// (all `u64`) followed by the entries in column-major `f64`.
    pub fn dump_blocks(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(b"SLABBLK1")?;
        let all: Vec<_> = self.blocks().collect();
        out.write_all(&(all.len() as u64).to_le_bytes())?;
        for (j, jp, b) in all {
            let d = b.to_dense();
            for v in [j, jp, d.nrows(), d.ncols()] {
                out.write_all(&(v as u64).to_le_bytes())?;
            }
            for c in 0..d.ncols() {
                for r in 0..d.nrows() {
                    out.write_all(&d[(r, c)].to_le_bytes())?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Block matrices read back from [`EquilibriumOperator::dump_blocks`].
pub fn read_block_dump(path: &Path) -> Result<Vec<(usize, usize, Mat<f64>)>> {
    let bytes = std::fs::read(path)?;
    let bad = || Error::invalid(format!("{} is not a block dump", path.display()));
    if bytes.len() < 16 || &bytes[..8] != b"SLABBLK1" {
        return Err(bad());
    }
    let mut pos = 8;
    let word = |pos: &mut usize| -> Result<[u8; 8]> {
        let w = bytes.get(*pos..*pos + 8).ok_or_else(bad)?;
        *pos += 8;
        Ok(w.try_into().unwrap())
    };
    let count = u64::from_le_bytes(word(&mut pos)?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut head = [0usize; 4];
        for h in &mut head {
            *h = u64::from_le_bytes(word(&mut pos)?) as usize;
        }
        let mut m = Mat::<f64>::zeros(head[2], head[3]);
        for c in 0..head[3] {
            for r in 0..head[2] {
                m[(r, c)] = f64::from_le_bytes(word(&mut pos)?);
            }
        }
        out.push((head[0], head[1], m));
    }
    Ok(out)
}

/// Single-slab solutions assembled from interface values.
pub struct Reconstruction {
    slabs: Vec<(SparseSystem, Vec<f64>)>,
    data: BoundaryData,
}

impl Reconstruction {
    pub fn slabs(&self) -> &[(SparseSystem, Vec<f64>)] {
        &self.slabs
    }

    /// Value at a lattice point, taken from the first single slab that
    /// carries a DOF there.
    pub fn value_at(&self, x: &[f64]) -> Option<f64> {
        self.slabs.iter().find_map(|(sys, u)| {
            let r = sys.region();
            let tol = 1e-9 * r.len(0);
            if x[0] < r.lo[0] - tol || x[0] > r.hi[0] + tol {
                return None;
            }
            sys.dof_at(x).map(|d| u[d])
        })
    }

    /// Values at every DOF of `global`, a system over the whole domain
    /// with the same backend. Dirichlet DOFs take the boundary data.
    pub fn values_on(&self, global: &SparseSystem) -> Result<Vec<f64>> {
        let dim = global.dim();
        (0..global.n_dofs())
            .map(|d| {
                let p = global.point(d);
                if global.kind(d) == RowKind::Dirichlet {
                    return Ok((self.data.dirichlet)(&p[..dim]));
                }
                self.value_at(&p[..dim])
                    .ok_or_else(|| Error::invalid(format!("no slab carries a DOF at {:?}", &p[..dim])))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Region;
    use crate::dense::max_abs;
    use crate::hbs::Arity;
    use crate::problem::{make_helmholtz, Problem};
    use crate::sparse::solve_dirichlet;

    fn fd_laplace(n_ds: usize, h: f64) -> (EquilibriumOperator, SlabDecomposition) {
        let op = make_helmholtz(0.0, 2).unwrap();
        let d = SlabDecomposition::decompose(Region::unit(2), n_ds, Topology::Open).unwrap();
        (build_operator(&op, &d, Backend::Fd { h }, BlockMode::Dense).unwrap(), d)
    }

    #[test]
    fn block_structure_is_tridiagonal() {
        let (eq, _) = fd_laplace(3, 1.0 / 16.0);
        assert_eq!(eq.n(), 3 * 15);
        assert!(eq.block(0, 1).is_some() && eq.block(1, 0).is_some() && eq.block(1, 2).is_some());
        assert!(eq.block(0, 2).is_none());
        assert_eq!(eq.blocks().count(), 4);
    }

    #[test]
    fn interface_values_solve_the_equilibrium_system() {
        let h = 1.0 / 16.0;
        let (eq, d) = fd_laplace(3, h);
        let pb = Problem::laplace2d();
        let global = assemble(&pb.op, d.domain(), Backend::Fd { h }).unwrap();
        let u = solve_dirichlet(&global, &pb.data).unwrap();
        let ui: Vec<f64> = d
            .interfaces()
            .iter()
            .flat_map(|&x| global.plane_dofs(x).unwrap().into_iter().map(|g| u[g]))
            .collect();
        let f = eq.equivalent_load(&pb.data).unwrap();
        let r = eq.apply(&ui).unwrap();
        let err = r.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "residual {err}");
        let rec = eq.reconstruct(&pb.data, &ui).unwrap();
        let v = rec.values_on(&global).unwrap();
        let e = v.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(e < 1e-12, "reconstruction {e}");
    }

    #[test]
    fn adjoint_is_the_transpose() {
        let (eq, _) = fd_laplace(3, 1.0 / 8.0);
        let s = eq.s_dense();
        for k in 0..eq.n() {
            let mut e = vec![0.0; eq.n()];
            e[k] = 1.0;
            let col = eq.apply_s_adjoint(&e).unwrap();
            for i in 0..eq.n() {
                assert!((col[i] - s[(k, i)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hbs_blocks_pass_probes() {
        let op = make_helmholtz(0.0, 2).unwrap();
        let d = SlabDecomposition::decompose(Region::unit(2), 3, Topology::Open).unwrap();
        let mut cfg = HbsConfig::new(12, Arity::Binary, 1);
        cfg.leaf_size = Some(24);
        let eq = build_operator(&op, &d, Backend::Fd { h: 1.0 / 128.0 }, BlockMode::Hbs(cfg)).unwrap();
        let rep = eq.verify_probes(5, 3).unwrap();
        assert!(rep.max_relative_error < 1e-6, "{rep:?}");
        let t = eq.timings();
        assert!(t.sample >= 0.0 && t.compress >= 0.0);
    }

    #[test]
    fn exact_adjoint_matches_forward() {
        let (eq, _) = fd_laplace(2, 1.0 / 12.0);
        let slab = &eq.slabs()[0];
        let m = eq.index_sets().block_len(1);
        let fwd = slab.apply_exact(0, Mat::<f64>::identity(m, m).as_ref()).unwrap();
        let adj = slab.apply_exact_adjoint(0, Mat::<f64>::identity(m, m).as_ref()).unwrap();
        assert!(max_abs((fwd.transpose() - adj).as_ref()) < 1e-13);
    }

    #[test]
    fn periodic_blocks_wrap_around() {
        let op = make_helmholtz(0.0, 2).unwrap();
        let d = SlabDecomposition::decompose(Region::unit(2), 4, Topology::Periodic).unwrap();
        let eq = build_operator(&op, &d, Backend::Fd { h: 1.0 / 16.0 }, BlockMode::Dense).unwrap();
        assert_eq!(eq.blocks().count(), 8);
        // translation invariance: all forward blocks agree
        let b01 = eq.block(0, 1).unwrap().to_dense();
        let b30 = eq.block(3, 0).unwrap().to_dense();
        assert!(max_abs((b01 - b30).as_ref()) < 1e-13);
        // a function periodic in x is reproduced
        let u: crate::problem::Field = std::sync::Arc::new(|x: &[f64]| {
            (2.0 * std::f64::consts::PI * x[0]).cos() * (x[1] * 2.0).sinh() / 10.0
        });
        let lap: crate::problem::Field = std::sync::Arc::new(|x: &[f64]| {
            let k = 2.0 * std::f64::consts::PI;
            -(4.0 - k * k) * (k * x[0]).cos() * (x[1] * 2.0).sinh() / 10.0
        });
        let data = BoundaryData::new(u.clone(), lap);
        let f = eq.equivalent_load(&data).unwrap();
        let ui: Vec<f64> = (0..4)
            .flat_map(|j| eq.interface_points(j).iter().map(move |p| (j, *p)))
            .map(|(j, p)| u(&[d.interfaces()[j], p[0]]))
            .collect();
        let r = eq.apply(&ui).unwrap();
        let err = r.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3, "periodic residual {err}");
    }

    #[test]
    fn block_dump_round_trips() {
        let (eq, _) = fd_laplace(2, 1.0 / 9.0);
        let path = std::env::temp_dir().join(format!("slab-dump-{}.bin", std::process::id()));
        eq.dump_blocks(&path).unwrap();
        let back = read_block_dump(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(back.len(), 2);
        for (j, jp, m) in back {
            let b = eq.block(j, jp).unwrap().to_dense();
            assert_eq!(max_abs((b - m).as_ref()), 0.0);
        }
    }
}
