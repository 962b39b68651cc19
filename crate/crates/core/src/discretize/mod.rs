//! Local and global stiffness matrices on boxes.
//!
//! Both backends share one lattice model: every axis carries a sorted list
//! of node coordinates, some of which are *breaks* (region ends, and for the
//! spectral backend every cell boundary). A node lying on breaks in two or
//! more axes is inactive; all other nodes are degrees of freedom. DOFs are
//! numbered lexicographically with axis 0 varying slowest, so every plane of
//! constant `x` is a contiguous run ordered by `y`, then `z`.
//!
//! Row types:
//! - region boundary nodes carry the identity (Dirichlet data),
//! - nodes on an interior cell face carry the jump in the normal derivative,
//! - all other nodes collocate the PDE.

pub mod chebyshev;
mod csr;

use faer::Mat;

pub use csr::Csr;

use crate::error::{Error, Result};
use crate::problem::{BoundaryData, EllipticOperator};

/// Axis-aligned box `[lo, hi]` in `dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub dim: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Region {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || !(1..=3).contains(&lo.len()) {
            return Err(Error::invalid("region corners must have equal length 1..=3"));
        }
        let mut r = Region {
            dim: lo.len(),
            lo: [0.0; 3],
            hi: [0.0; 3],
        };
        for d in 0..lo.len() {
            if !(hi[d] > lo[d]) {
                return Err(Error::invalid(format!("region extent on axis {d} is not positive")));
            }
            r.lo[d] = lo[d];
            r.hi[d] = hi[d];
        }
        Ok(r)
    }

    pub fn unit(dim: usize) -> Self {
        Region::new(&vec![0.0; dim], &vec![1.0; dim]).expect("unit box")
    }

    pub fn len(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    /// Copy with axis 0 replaced by `[a, b]`.
    pub fn with_x(&self, a: f64, b: f64) -> Self {
        let mut r = *self;
        r.lo[0] = a;
        r.hi[0] = b;
        r
    }
}

/// Discretization choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    /// Second-order finite differences with grid spacing `h` on every axis.
    Fd { h: f64 },
    /// Multidomain Chebyshev collocation, `p` points per cell edge, cells of
    /// the given widths.
    Hps { cell: [f64; 3], p: usize },
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Fd { .. } => "fd",
            Backend::Hps { .. } => "hps",
        }
    }

    /// Spacing between consecutive admissible interface positions.
    pub fn x_quantum(&self) -> f64 {
        match *self {
            Backend::Fd { h } => h,
            Backend::Hps { cell, .. } => cell[0],
        }
    }
}

/// Number of whole units of `q` in `len`, or an error if not commensurate.
pub(crate) fn whole_multiple(len: f64, q: f64, what: &str) -> Result<usize> {
    let n = (len / q).round();
    if n < 1.0 || (n * q - len).abs() > 1e-9 * len.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "{what}: length {len} is not an integer multiple of {q}"
        )));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone)]
struct Axis {
    coords: Vec<f64>,
    breaks: Vec<bool>,
    /// Nodes per cell minus one (HPS), or the whole axis (FD).
    stride: usize,
    /// Cell width along this axis (HPS) or grid spacing (FD).
    width: f64,
}

impl Axis {
    fn fd(lo: f64, len: f64, h: f64) -> Result<Self> {
        let n = whole_multiple(len, h, "finite-difference grid")?;
        let hh = len / n as f64;
        let coords = (0..=n).map(|i| lo + i as f64 * hh).collect();
        let mut breaks = vec![false; n + 1];
        breaks[0] = true;
        breaks[n] = true;
        Ok(Axis {
            coords,
            breaks,
            stride: n,
            width: hh,
        })
    }

    fn hps(lo: f64, len: f64, cell: f64, p: usize) -> Result<Self> {
        let ncell = whole_multiple(len, cell, "spectral cell lattice")?;
        let w = len / ncell as f64;
        let s = p - 1;
        let mut coords = Vec::with_capacity(ncell * s + 1);
        let mut breaks = Vec::with_capacity(ncell * s + 1);
        for c in 0..ncell {
            let a = lo + c as f64 * w;
            for k in 0..s {
                coords.push(a + w * chebyshev::unit_fraction(p, k));
                breaks.push(k == 0);
            }
        }
        coords.push(lo + len);
        breaks.push(true);
        Ok(Axis {
            coords,
            breaks,
            stride: s,
            width: w,
        })
    }

    fn n(&self) -> usize {
        self.coords.len()
    }

    fn find(&self, x: f64) -> Option<usize> {
        let tol = 1e-9 * self.width;
        let i = self.coords.partition_point(|&c| c < x - tol);
        (i < self.n() && (self.coords[i] - x).abs() <= tol).then_some(i)
    }
}

/// Role of a DOF within its system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// PDE collocated at the node.
    Pde,
    /// Normal-derivative continuity across a cell face.
    Jump,
    /// Region boundary; the row is the identity.
    Dirichlet,
}

/// Sparse stiffness matrix of a box together with its node bookkeeping.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    matrix: Csr,
    backend: Backend,
    region: Region,
    axes: Vec<Axis>,
    shape: [usize; 3],
    node_to_dof: Vec<usize>,
    dof_to_node: Vec<usize>,
    kinds: Vec<RowKind>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

const INACTIVE: usize = usize::MAX;

impl SparseSystem {
    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn dim(&self) -> usize {
        self.region.dim
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_to_node.len()
    }

    /// DOFs whose rows are not Dirichlet, in ascending order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Region-boundary DOFs, in ascending order.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn kind(&self, dof: usize) -> RowKind {
        self.kinds[dof]
    }

    fn multi(&self, node: usize) -> [usize; 3] {
        let mut m = [0; 3];
        let mut rem = node;
        for d in (0..self.dim()).rev() {
            m[d] = rem % self.shape[d];
            rem /= self.shape[d];
        }
        m
    }

    fn node_of(&self, m: &[usize; 3]) -> usize {
        (0..self.dim()).fold(0, |acc, d| acc * self.shape[d] + m[d])
    }

    pub fn point(&self, dof: usize) -> [f64; 3] {
        let m = self.multi(self.dof_to_node[dof]);
        let mut x = [0.0; 3];
        for d in 0..self.dim() {
            x[d] = self.axes[d].coords[m[d]];
        }
        x
    }

    /// DOF at the lattice point `x`, if one is active there.
    pub fn dof_at(&self, x: &[f64]) -> Option<usize> {
        let mut m = [0; 3];
        for d in 0..self.dim() {
            m[d] = self.axes[d].find(x[d])?;
        }
        let dof = self.node_to_dof[self.node_of(&m)];
        (dof != INACTIVE).then_some(dof)
    }

    /// Node coordinates along axis 0.
    pub fn x_coords(&self) -> &[f64] {
        &self.axes[0].coords
    }

    /// DOFs on the plane `x = x0` that are interior in every other axis,
    /// in canonical order (`y`, then `z`).
    pub fn plane_dofs(&self, x0: f64) -> Result<Vec<usize>> {
        let ix = self.axes[0].find(x0).ok_or_else(|| {
            Error::invalid(format!(
                "plane x = {x0} does not coincide with a {} grid line of {:?}",
                self.backend.name(),
                self.region
            ))
        })?;
        let mut out = Vec::new();
        let n_rest: usize = (1..self.dim()).map(|d| self.shape[d]).product();
        for r in 0..n_rest {
            let node = ix * n_rest + r;
            let m = self.multi(node);
            if (1..self.dim()).any(|d| self.axes[d].breaks[m[d]]) {
                continue;
            }
            let dof = self.node_to_dof[node];
            debug_assert_ne!(dof, INACTIVE);
            out.push(dof);
        }
        Ok(out)
    }

    /// Square roots of the tensor Clenshaw–Curtis weights of `plane_dofs(x0)`
    /// (spectral backend); all ones for finite differences.
    pub fn plane_weights(&self, x0: f64) -> Result<Vec<f64>> {
        let dofs = self.plane_dofs(x0)?;
        match self.backend {
            Backend::Fd { .. } => Ok(vec![1.0; dofs.len()]),
            Backend::Hps { p, .. } => {
                let w = chebyshev::clenshaw_curtis_weights(p);
                Ok(dofs
                    .iter()
                    .map(|&dof| {
                        let m = self.multi(self.dof_to_node[dof]);
                        (1..self.dim())
                            .map(|d| {
                                let a = &self.axes[d];
                                0.5 * a.width * w[m[d] % a.stride]
                            })
                            .product::<f64>()
                            .sqrt()
                    })
                    .collect())
            }
        }
    }

    /// `A(rows, cols)`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Csr {
        self.matrix.submatrix(rows, cols)
    }

    /// Values of a function at the given DOFs.
    pub fn sample(&self, f: &dyn Fn(&[f64]) -> f64, dofs: &[usize]) -> Vec<f64> {
        let dim = self.dim();
        dofs.iter().map(|&d| f(&self.point(d)[..dim])).collect()
    }

    /// Right-hand side over the interior DOFs with the Dirichlet values
    /// eliminated: `b_I - A(I, B) f_B`.
    pub fn build_rhs(&self, data: &BoundaryData) -> Vec<f64> {
        let fb = self.sample(&*data.dirichlet, &self.boundary);
        self.build_rhs_with(data, &fb)
    }

    /// As [`build_rhs`](Self::build_rhs) with explicit boundary values.
    pub fn build_rhs_with(&self, data: &BoundaryData, boundary_values: &[f64]) -> Vec<f64> {
        assert_eq!(boundary_values.len(), self.boundary.len());
        let dim = self.dim();
        let mut full = vec![0.0; self.n_dofs()];
        for (&dof, &v) in self.boundary.iter().zip(boundary_values) {
            full[dof] = v;
        }
        self.interior
            .iter()
            .map(|&dof| {
                let load = match self.kinds[dof] {
                    RowKind::Pde => (data.load)(&self.point(dof)[..dim]),
                    _ => 0.0,
                };
                let (cols, vals) = self.matrix.row(dof);
                let coupling: f64 = cols
                    .iter()
                    .zip(vals)
                    .filter(|(c, _)| self.kinds[**c] == RowKind::Dirichlet)
                    .map(|(&c, &a)| a * full[c])
                    .sum();
                load - coupling
            })
            .collect()
    }
}

/// Finite-difference stiffness matrix on `region` with spacing `h`.
pub fn assemble_fd(op: &EllipticOperator, region: &Region, h: f64) -> Result<SparseSystem> {
    assemble(op, region, Backend::Fd { h })
}

/// Spectral stiffness matrix on `region` split into `tiling` cells per axis.
pub fn assemble_hps(
    op: &EllipticOperator,
    region: &Region,
    tiling: &[usize],
    p: usize,
) -> Result<SparseSystem> {
    if tiling.len() != region.dim || tiling.contains(&0) {
        return Err(Error::invalid("tiling needs one positive cell count per axis"));
    }
    let mut cell = [1.0; 3];
    for d in 0..region.dim {
        cell[d] = region.len(d) / tiling[d] as f64;
    }
    assemble(op, region, Backend::Hps { cell, p })
}

/// Stiffness matrix of `region` under `backend`.
pub fn assemble(op: &EllipticOperator, region: &Region, backend: Backend) -> Result<SparseSystem> {
    let dim = region.dim;
    if op.dim() != dim {
        return Err(Error::DimensionMismatch {
            context: "operator vs region",
            expected: dim,
            got: op.dim(),
        });
    }
    let axes = (0..dim)
        .map(|d| match backend {
            Backend::Fd { h } => {
                if !(h > 0.0) {
                    return Err(Error::invalid("grid spacing must be positive"));
                }
                Axis::fd(region.lo[d], region.len(d), h)
            }
            Backend::Hps { cell, p } => {
                if p < 4 {
                    return Err(Error::invalid(format!("spectral order p = {p} must be >= 4")));
                }
                Axis::hps(region.lo[d], region.len(d), cell[d], p)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    for (d, a) in axes.iter().enumerate() {
        if a.n() < 3 {
            return Err(Error::invalid(format!("axis {d} has no interior nodes")));
        }
    }
    let mut shape = [1; 3];
    for d in 0..dim {
        shape[d] = axes[d].n();
    }
    let n_nodes: usize = shape.iter().product();
    let mut sys = SparseSystem {
        matrix: Csr::new(0, 0),
        backend,
        region: *region,
        axes,
        shape,
        node_to_dof: vec![INACTIVE; n_nodes],
        dof_to_node: Vec::new(),
        kinds: Vec::new(),
        interior: Vec::new(),
        boundary: Vec::new(),
    };
    for node in 0..n_nodes {
        let m = sys.multi(node);
        let nbreaks = (0..dim).filter(|&d| sys.axes[d].breaks[m[d]]).count();
        if nbreaks > 1 {
            continue;
        }
        let dof = sys.dof_to_node.len();
        sys.node_to_dof[node] = dof;
        sys.dof_to_node.push(node);
        let on_boundary = (0..dim).any(|d| m[d] == 0 || m[d] == shape[d] - 1);
        let kind = if on_boundary {
            RowKind::Dirichlet
        } else if nbreaks == 1 {
            RowKind::Jump
        } else {
            RowKind::Pde
        };
        sys.kinds.push(kind);
        if kind == RowKind::Dirichlet {
            sys.boundary.push(dof);
        } else {
            sys.interior.push(dof);
        }
    }

    let ndof = sys.n_dofs();
    let mut matrix = Csr::new(ndof, ndof);
    let (d1, d2) = match backend {
        Backend::Hps { p, .. } => {
            let d = chebyshev::diff_matrix(p);
            let dd = &d * &d;
            (Some(d), Some(dd))
        }
        Backend::Fd { .. } => (None, None),
    };
    for dof in 0..ndof {
        let node = sys.dof_to_node[dof];
        let m = sys.multi(node);
        let row = match sys.kinds[dof] {
            RowKind::Dirichlet => vec![(dof, 1.0)],
            RowKind::Jump => jump_row(&sys, &m, d1.as_ref().expect("jump rows are spectral")),
            RowKind::Pde => {
                let x = sys.point(dof);
                let (a, c) = op.coefficients_at(&x[..dim])?;
                match backend {
                    Backend::Fd { .. } => fd_row(&sys, &m, dof, &a, c),
                    Backend::Hps { .. } => hps_row(&sys, &m, dof, &a, c, d2.as_ref().unwrap()),
                }
            }
        };
        matrix.push_row(row);
    }
    sys.matrix = matrix;
    Ok(sys)
}

fn dof_at(sys: &SparseSystem, m: &[usize; 3]) -> usize {
    let dof = sys.node_to_dof[sys.node_of(m)];
    debug_assert_ne!(dof, INACTIVE, "stencil touched inactive node {m:?}");
    dof
}

fn fd_row(sys: &SparseSystem, m: &[usize; 3], dof: usize, a: &[f64; 3], c: f64) -> Vec<(usize, f64)> {
    let mut row = Vec::with_capacity(2 * sys.dim() + 1);
    let mut diag = c;
    for d in 0..sys.dim() {
        let h = sys.axes[d].width;
        let w = a[d] / (h * h);
        diag += 2.0 * w;
        for off in [-1isize, 1] {
            let mut nb = *m;
            nb[d] = (m[d] as isize + off) as usize;
            row.push((dof_at(sys, &nb), -w));
        }
    }
    row.push((dof, diag));
    row
}

fn hps_row(
    sys: &SparseSystem,
    m: &[usize; 3],
    dof: usize,
    a: &[f64; 3],
    c: f64,
    d2: &Mat<f64>,
) -> Vec<(usize, f64)> {
    let mut row = Vec::new();
    for d in 0..sys.dim() {
        let axis = &sys.axes[d];
        let s = axis.stride;
        let cell = m[d] / s;
        let k = m[d] % s;
        let scale = (2.0 / axis.width).powi(2);
        for j in 0..=s {
            let mut nb = *m;
            nb[d] = cell * s + j;
            row.push((dof_at(sys, &nb), -a[d] * scale * d2[(k, j)]));
        }
    }
    row.push((dof, c));
    row
}

fn jump_row(sys: &SparseSystem, m: &[usize; 3], d1: &Mat<f64>) -> Vec<(usize, f64)> {
    let d = (0..sys.dim())
        .find(|&d| sys.axes[d].breaks[m[d]])
        .expect("jump node lies on a break");
    let axis = &sys.axes[d];
    let s = axis.stride;
    let scale = 2.0 / axis.width;
    let right = m[d] / s;
    let left = right - 1;
    let mut row = Vec::with_capacity(2 * (s + 1));
    for j in 0..=s {
        let mut nb = *m;
        nb[d] = left * s + j;
        row.push((dof_at(sys, &nb), scale * d1[(s, j)]));
        nb[d] = right * s + j;
        row.push((dof_at(sys, &nb), -scale * d1[(0, j)]));
    }
    row
}

/// Closed-form count of active spectral DOFs on an `nx × ny` cell tiling.
pub fn hps_active_count_2d(nx: usize, ny: usize, p: usize) -> usize {
    let q = p - 2;
    nx * ny * q * q + q * ((nx + 1) * ny + (ny + 1) * nx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_helmholtz, make_variable_coefficient_2d, Problem};
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn fd_1d_interior_row_is_standard_stencil() {
        let op = make_helmholtz(0.0, 1).unwrap();
        let h = 0.25;
        let sys = assemble_fd(&op, &Region::unit(1), h).unwrap();
        assert_eq!(sys.n_dofs(), 5);
        let a = sys.matrix().to_dense();
        assert_eq!(a[(2, 1)], -16.0);
        assert_eq!(a[(2, 2)], 32.0);
        assert_eq!(a[(2, 3)], -16.0);
    }

    #[test]
    fn fd_laplace_rows_sum_to_zero_away_from_boundary() {
        let op = make_helmholtz(0.0, 2).unwrap();
        let sys = assemble_fd(&op, &Region::unit(2), 0.125).unwrap();
        for &i in sys.interior() {
            let (cols, vals) = sys.matrix().row(i);
            let s: f64 = vals.iter().sum();
            assert!(s.abs() < 1e-10);
            for (&c, &v) in cols.iter().zip(vals) {
                if c != i {
                    assert!(v <= 0.0);
                }
            }
        }
        // corners are inactive: (9*9) - 4 nodes
        assert_eq!(sys.n_dofs(), 77);
        assert_eq!(sys.interior().len(), 49);
    }

    #[test]
    fn fd_variable_coefficient_coupling() {
        let op = make_variable_coefficient_2d();
        let h = 0.125;
        let sys = assemble_fd(&op, &Region::unit(2), h).unwrap();
        let dof = sys
            .interior()
            .iter()
            .copied()
            .find(|&d| {
                let x = sys.point(d);
                (x[0] - 0.25).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12
            })
            .unwrap();
        let (cols, vals) = sys.matrix().row(dof);
        let left = cols
            .iter()
            .zip(vals)
            .find(|(c, _)| (sys.point(**c)[0] - 0.125).abs() < 1e-12)
            .unwrap();
        assert!((left.1 + 1.0 / (h * h)).abs() < 1e-9);
    }

    #[test]
    fn fd_rejects_incommensurate_spacing() {
        let op = make_helmholtz(0.0, 2).unwrap();
        assert!(assemble_fd(&op, &Region::unit(2), 0.3).is_err());
    }

    #[test]
    fn rhs_examples() {
        let op = make_helmholtz(0.0, 1).unwrap();
        let h = 0.25;
        let sys = assemble_fd(&op, &Region::unit(1), h).unwrap();
        let zero = BoundaryData::zero();
        assert!(sys.build_rhs(&zero).iter().all(|&v| v == 0.0));
        let data = BoundaryData::new(Arc::new(|x: &[f64]| if x[0] < 0.5 { 1.0 } else { 0.0 }), Arc::new(|_: &[f64]| 0.0));
        assert_eq!(sys.build_rhs(&data), vec![16.0, 0.0, 0.0]);
        let op2 = make_helmholtz(0.0, 2).unwrap();
        let sys2 = assemble_fd(&op2, &Region::unit(2), 0.25).unwrap();
        let unit_load = BoundaryData::new(Arc::new(|_: &[f64]| 0.0), Arc::new(|_: &[f64]| 1.0));
        assert!(sys2.build_rhs(&unit_load).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn hps_active_count_matches_formula() {
        let op = make_helmholtz(0.0, 2).unwrap();
        for (nx, ny, p) in [(1, 1, 6), (2, 3, 5), (4, 2, 8)] {
            let sys = assemble_hps(&op, &Region::unit(2), &[nx, ny], p).unwrap();
            assert_eq!(sys.n_dofs(), hps_active_count_2d(nx, ny, p), "{nx}x{ny} p={p}");
        }
        // single cell, p = 6: 16 interior + 4 * 4 edge nodes
        let one = assemble_hps(&op, &Region::unit(2), &[1, 1], 6).unwrap();
        assert_eq!(one.interior().len(), 16);
        assert_eq!(one.boundary().len(), 16);
    }

    fn interior_residual(sys: &SparseSystem, op: &EllipticOperator, u: &dyn Fn(&[f64]) -> f64, lap: &dyn Fn(&[f64]) -> f64) -> f64 {
        residual_by_kind(sys, op, u, lap).0.max(residual_by_kind(sys, op, u, lap).1)
    }

    /// Largest residual over PDE rows and over jump rows.
    fn residual_by_kind(sys: &SparseSystem, op: &EllipticOperator, u: &dyn Fn(&[f64]) -> f64, lap: &dyn Fn(&[f64]) -> f64) -> (f64, f64) {
        let all: Vec<usize> = (0..sys.n_dofs()).collect();
        let uv = sys.sample(u, &all);
        let au = sys.matrix().matvec(&uv).unwrap();
        let (mut pde, mut jump) = (0.0f64, 0.0f64);
        for &i in sys.interior() {
            let x = sys.point(i);
            match sys.kind(i) {
                RowKind::Pde => pde = pde.max((au[i] - lap(&x[..op.dim()])).abs()),
                _ => jump = jump.max(au[i].abs()),
            }
        }
        (pde, jump)
    }

    #[test]
    fn hps_linear_function_is_exact() {
        let op = make_helmholtz(0.0, 2).unwrap();
        let sys = assemble_hps(&op, &Region::new(&[0.0, 0.0], &[2.0, 1.0]).unwrap(), &[3, 2], 7).unwrap();
        let r = interior_residual(&sys, &op, &|x| 3.0 * x[0] - x[1] + 0.5, &|_| 0.0);
        assert!(r < 1e-10, "residual {r}");
        let unit = assemble_hps(&op, &Region::unit(2), &[2, 2], 6).unwrap();
        let r = interior_residual(&unit, &op, &|x| x[0], &|_| 0.0);
        assert!(r < 1e-12, "residual {r}");
    }

    #[test]
    fn hps_collocation_of_smooth_solution() {
        // The degree-9 interpolation error of sin(pi x) on half-width cells
        // is about 2e-11; two differentiations amplify it by ~n^4 (2/w)^2,
        // which puts the p = 10 residual near 1e-7.
        let op = make_helmholtz(0.0, 2).unwrap();
        let u = |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin();
        let lap = |x: &[f64]| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin();
        let res = |p| {
            let sys = assemble_hps(&op, &Region::unit(2), &[2, 2], p).unwrap();
            residual_by_kind(&sys, &op, &u, &lap)
        };
        let (pde10, jump10) = res(10);
        let (pde14, jump14) = res(14);
        assert!(pde10 < 1e-6 && jump10 < 1e-7, "p=10: {pde10:e} {jump10:e}");
        assert!(pde14 < 1e-10 && jump14 < 1e-11, "p=14: {pde14:e} {jump14:e}");
    }

    #[test]
    fn hps_3d_linear_function_is_exact() {
        let op = make_helmholtz(0.0, 3).unwrap();
        let sys = assemble_hps(&op, &Region::unit(3), &[2, 1, 2], 5).unwrap();
        let r = interior_residual(&sys, &op, &|x| x[0] + 2.0 * x[1] - x[2], &|_| 0.0);
        assert!(r < 1e-11, "residual {r}");
    }

    #[test]
    fn fd_reference_residual_shrinks_quadratically() {
        let p = Problem::vc2d(0.0);
        let u = p.reference.as_ref().unwrap().solution.clone();
        let g = p.data.load.clone();
        let res = |h: f64| {
            let sys = assemble_fd(&p.op, &Region::unit(2), h).unwrap();
            interior_residual(&sys, &p.op, &*u, &*g)
        };
        let (r1, r2) = (res(1.0 / 16.0), res(1.0 / 32.0));
        let rate = (r1 / r2).log2();
        assert!((rate - 2.0).abs() < 0.2, "rate {rate}");
    }

    #[test]
    fn plane_dofs_and_weights() {
        let op = make_helmholtz(0.0, 2).unwrap();
        let sys = assemble_hps(&op, &Region::unit(2), &[2, 4], 6).unwrap();
        let dofs = sys.plane_dofs(0.5).unwrap();
        assert_eq!(dofs.len(), 4 * 4);
        assert!(dofs.windows(2).all(|w| sys.point(w[0])[1] < sys.point(w[1])[1]));
        assert!(dofs.iter().all(|&d| sys.kind(d) == RowKind::Jump));
        let w = sys.plane_weights(0.5).unwrap();
        assert!(w.iter().all(|&v| v > 0.0));
        assert!(sys.plane_dofs(0.3).is_err());
        let fd = assemble_fd(&op, &Region::unit(2), 0.1).unwrap();
        assert_eq!(fd.plane_dofs(0.3).unwrap().len(), 9);
    }
}
