//! Slab decompositions along axis 0 and the index sets of their
//! overlapping double-wide slabs.
//!
//! Interfaces are numbered `0..n_ds`. Double slab `j` spans the two slabs
//! adjacent to interface `j`; its outer faces are interfaces `j - 1` and
//! `j + 1` (or the physical boundary). Under periodic topology neighbours
//! wrap around and slab coordinates are unwrapped, so a double slab may
//! extend below 0 or above `L`.

use crate::discretize::{whole_multiple, Backend, Region, SparseSystem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Open,
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabDecomposition {
    domain: Region,
    interfaces: Vec<f64>,
    topology: Topology,
}

impl SlabDecomposition {
    /// Uniformly spaced interfaces: `H = L / (n + 1)` (open) or `L / n`
    /// (periodic, with an interface at `x = 0`).
    pub fn decompose(domain: Region, n_interfaces: usize, topology: Topology) -> Result<Self> {
        if n_interfaces == 0 {
            return Err(Error::invalid("at least one interface is required"));
        }
        let len = domain.len(0);
        let xs = match topology {
            Topology::Open => {
                let h = len / (n_interfaces + 1) as f64;
                (1..=n_interfaces).map(|j| domain.lo[0] + j as f64 * h).collect()
            }
            Topology::Periodic => {
                let h = len / n_interfaces as f64;
                (0..n_interfaces).map(|j| domain.lo[0] + j as f64 * h).collect()
            }
        };
        Self::with_interfaces(domain, xs, topology)
    }

    /// Uniform decomposition with slab width `h`.
    pub fn with_width(domain: Region, h: f64, topology: Topology) -> Result<Self> {
        let n = whole_multiple(domain.len(0), h, "slab width")?;
        match topology {
            Topology::Open if n < 2 => Err(Error::invalid("slab width leaves no interior interface")),
            Topology::Open => Self::decompose(domain, n - 1, topology),
            Topology::Periodic => Self::decompose(domain, n, topology),
        }
    }

    /// Arbitrary strictly increasing interface positions.
    pub fn with_interfaces(domain: Region, interfaces: Vec<f64>, topology: Topology) -> Result<Self> {
        if interfaces.is_empty() {
            return Err(Error::invalid("at least one interface is required"));
        }
        if interfaces.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("interface positions must be strictly increasing"));
        }
        let (a, b) = (domain.lo[0], domain.hi[0]);
        let ok = match topology {
            Topology::Open => interfaces[0] > a && *interfaces.last().unwrap() < b,
            Topology::Periodic => interfaces[0] >= a && *interfaces.last().unwrap() < b,
        };
        if !ok {
            return Err(Error::invalid("interfaces must lie inside the domain"));
        }
        if topology == Topology::Periodic && interfaces.len() < 3 {
            return Err(Error::invalid(
                "periodic topology needs at least 3 interfaces so that neighbours are distinct",
            ));
        }
        Ok(Self {
            domain,
            interfaces,
            topology,
        })
    }

    pub fn domain(&self) -> &Region {
        &self.domain
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn n_ds(&self) -> usize {
        self.interfaces.len()
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    /// Slab width when the spacing is uniform.
    pub fn width(&self) -> Option<f64> {
        let gaps: Vec<f64> = (0..=self.n_ds()).filter_map(|k| self.gap(k)).collect();
        let h = gaps[0];
        gaps.iter()
            .all(|g| (g - h).abs() <= 1e-12 * h)
            .then_some(h)
    }

    /// Width of single slab `k`, which ends at interface `k` (open: `k` in
    /// `0..=n_ds`; periodic: `k` in `0..n_ds`, slab `k` starts at
    /// interface `k`).
    fn gap(&self, k: usize) -> Option<f64> {
        let (a, b) = self.single_slab_x(k)?;
        Some(b - a)
    }

    /// Position of interface `j` shifted by whole periods, `j` may be any
    /// integer under periodic topology.
    fn x_at(&self, j: isize) -> f64 {
        let n = self.n_ds() as isize;
        match self.topology {
            Topology::Open => {
                if j < 0 {
                    self.domain.lo[0]
                } else if j >= n {
                    self.domain.hi[0]
                } else {
                    self.interfaces[j as usize]
                }
            }
            Topology::Periodic => {
                let wraps = j.div_euclid(n);
                self.interfaces[j.rem_euclid(n) as usize] + wraps as f64 * self.domain.len(0)
            }
        }
    }

    /// Neighbouring interfaces of `j` (below, above); `None` where the
    /// double slab touches the physical boundary.
    pub fn neighbors(&self, j: usize) -> [Option<usize>; 2] {
        let n = self.n_ds();
        match self.topology {
            Topology::Open => [j.checked_sub(1), (j + 1 < n).then_some(j + 1)],
            Topology::Periodic => [Some((j + n - 1) % n), Some((j + 1) % n)],
        }
    }

    /// Double slab around interface `j`.
    pub fn double_slab(&self, j: usize) -> Region {
        let j = j as isize;
        self.domain.with_x(self.x_at(j - 1), self.x_at(j + 1))
    }

    /// Axis-0 positions of the outer faces of double slab `j` (below, above).
    pub fn outer_faces(&self, j: usize) -> [f64; 2] {
        let j = j as isize;
        [self.x_at(j - 1), self.x_at(j + 1)]
    }

    /// Number of single slabs.
    pub fn n_single(&self) -> usize {
        match self.topology {
            Topology::Open => self.n_ds() + 1,
            Topology::Periodic => self.n_ds(),
        }
    }

    fn single_slab_x(&self, k: usize) -> Option<(f64, f64)> {
        if k >= self.n_single() {
            return None;
        }
        let k = k as isize;
        Some(match self.topology {
            Topology::Open => (self.x_at(k - 1), self.x_at(k)),
            Topology::Periodic => (self.x_at(k), self.x_at(k + 1)),
        })
    }

    /// Single slab `k` and the interfaces on its two faces.
    pub fn single_slab(&self, k: usize) -> (Region, [Option<usize>; 2]) {
        let (a, b) = self.single_slab_x(k).expect("single slab index in range");
        let faces = match self.topology {
            Topology::Open => [k.checked_sub(1), (k < self.n_ds()).then_some(k)],
            Topology::Periodic => [Some(k), Some((k + 1) % self.n_ds())],
        };
        (self.domain.with_x(a, b), faces)
    }

    /// Checks that every slab boundary sits on the discretization lattice.
    pub fn check_backend(&self, backend: &Backend) -> Result<()> {
        let q = backend.x_quantum();
        for (j, &x) in self.interfaces.iter().enumerate() {
            let off = x - self.domain.lo[0];
            if off == 0.0 {
                continue;
            }
            whole_multiple(off, q, &format!("interface {j} offset")).map_err(|_| {
                Error::invalid(format!(
                    "interface {j} at x = {x} is not on a {} lattice plane (spacing {q})",
                    backend.name()
                ))
            })?;
        }
        whole_multiple(self.domain.len(0), q, "domain length")?;
        Ok(())
    }

    /// One-line summary for experiment records.
    pub fn summary(&self) -> String {
        match self.width() {
            Some(h) => format!("n_ds={} H={h}", self.n_ds()),
            None => format!("n_ds={} H=nonuniform", self.n_ds()),
        }
    }
}

/// Outer face of a double slab carrying the data of a neighbouring
/// interface.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterFace {
    pub neighbor: usize,
    /// Positions within the slab's boundary list, in canonical order.
    pub positions: Vec<usize>,
}

/// Index sets of one double slab.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalIndex {
    /// Central interface DOFs as positions within the interior list.
    pub center: Vec<usize>,
    pub outer: Vec<OuterFace>,
}

/// Index sets for every double slab plus the global interface layout.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSets {
    pub local: Vec<LocalIndex>,
    /// Offsets of each interface block in the interface vector; length
    /// `n_ds + 1`.
    pub offsets: Vec<usize>,
}

impl IndexSets {
    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block_len(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    pub fn range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }
}

fn positions_in(list: &[usize], dofs: &[usize], what: &str) -> Result<Vec<usize>> {
    dofs.iter()
        .map(|d| {
            list.binary_search(d)
                .map_err(|_| Error::invalid(format!("{what}: DOF {d} has the wrong class")))
        })
        .collect()
}

/// Transverse coordinates (all axes but 0) of the given DOFs.
fn transverse(sys: &SparseSystem, dofs: &[usize]) -> Vec<[f64; 2]> {
    dofs.iter()
        .map(|&d| {
            let x = sys.point(d);
            [x[1], x[2]]
        })
        .collect()
}

/// Builds index sets from the assembled double slabs (`systems[j]` covers
/// `decomp.double_slab(j)`), checking that shared interfaces carry
/// identical node sets.
pub fn index_sets(decomp: &SlabDecomposition, systems: &[SparseSystem]) -> Result<IndexSets> {
    let n = decomp.n_ds();
    if systems.len() != n {
        return Err(Error::DimensionMismatch {
            context: "one local system per double slab",
            expected: n,
            got: systems.len(),
        });
    }
    let mut centers = Vec::with_capacity(n);
    let mut center_geom = Vec::with_capacity(n);
    for (j, sys) in systems.iter().enumerate() {
        let dofs = sys.plane_dofs(decomp.interfaces()[j])?;
        center_geom.push(transverse(sys, &dofs));
        centers.push(positions_in(sys.interior(), &dofs, "central interface")?);
    }
    let mut local = Vec::with_capacity(n);
    for (j, sys) in systems.iter().enumerate() {
        let faces = decomp.outer_faces(j);
        let mut outer = Vec::new();
        for (side, nb) in decomp.neighbors(j).into_iter().enumerate() {
            let Some(nb) = nb else { continue };
            let dofs = sys.plane_dofs(faces[side])?;
            let geom = transverse(sys, &dofs);
            let want = &center_geom[nb];
            if geom.len() != want.len() {
                return Err(Error::NonConforming {
                    interface: nb,
                    detail: format!(
                        "{} nodes seen from double slab {j}, {} from its own slab",
                        geom.len(),
                        want.len()
                    ),
                });
            }
            let scale = decomp.domain().len(1).max(decomp.domain().len(2));
            if let Some(k) = geom
                .iter()
                .zip(want)
                .position(|(a, b)| (a[0] - b[0]).abs() + (a[1] - b[1]).abs() > 1e-9 * scale.max(1.0))
            {
                return Err(Error::NonConforming {
                    interface: nb,
                    detail: format!("node {k} differs between double slabs {j} and {nb}"),
                });
            }
            outer.push(OuterFace {
                neighbor: nb,
                positions: positions_in(sys.boundary(), &dofs, "outer face")?,
            });
        }
        local.push(LocalIndex {
            center: centers[j].clone(),
            outer,
        });
    }
    let mut offsets = vec![0];
    for c in &centers {
        offsets.push(offsets.last().unwrap() + c.len());
    }
    Ok(IndexSets { local, offsets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble, assemble_fd};
    use crate::problem::make_helmholtz;

    #[test]
    fn uniform_open_decomposition() {
        let d = SlabDecomposition::decompose(Region::unit(2), 4, Topology::Open).unwrap();
        assert!((d.width().unwrap() - 0.2).abs() < 1e-15);
        let psi = d.double_slab(1);
        assert!((psi.lo[0] - 0.2).abs() < 1e-15 && (psi.hi[0] - 0.6).abs() < 1e-15);
        assert_eq!(d.neighbors(0), [None, Some(1)]);
        assert_eq!(d.neighbors(3), [Some(2), None]);
        let cube = SlabDecomposition::decompose(Region::unit(3), 7, Topology::Open).unwrap();
        assert!((cube.width().unwrap() - 0.125).abs() < 1e-15);
        let per = SlabDecomposition::decompose(Region::unit(3), 16, Topology::Periodic).unwrap();
        assert_eq!(per.n_ds(), 16);
        assert_eq!(per.neighbors(0), [Some(15), Some(1)]);
        assert!((per.double_slab(0).lo[0] + 1.0 / 16.0).abs() < 1e-15);
        assert!(SlabDecomposition::decompose(Region::unit(2), 0, Topology::Open).is_err());
        assert!(SlabDecomposition::decompose(Region::unit(2), 2, Topology::Periodic).is_err());
    }

    #[test]
    fn fd_index_sets_have_one_column_per_interface() {
        let op = make_helmholtz(0.0, 2).unwrap();
        // 9x9 interior nodes, interfaces at columns 3 and 6 (1-based)
        let h = 0.1;
        let d = SlabDecomposition::with_interfaces(Region::unit(2), vec![0.3, 0.6], Topology::Open).unwrap();
        let systems: Vec<_> = (0..2).map(|j| assemble_fd(&op, &d.double_slab(j), h).unwrap()).collect();
        let idx = index_sets(&d, &systems).unwrap();
        assert_eq!(idx.block_len(0), 9);
        assert_eq!(idx.block_len(1), 9);
        assert_eq!(idx.local[0].outer.len(), 1);
        assert_eq!(idx.local[0].outer[0].neighbor, 1);
    }

    #[test]
    fn mismatched_interfaces_are_rejected() {
        let op = make_helmholtz(0.0, 2).unwrap();
        let d = SlabDecomposition::decompose(Region::unit(2), 2, Topology::Open).unwrap();
        let a = assemble_fd(&op, &d.double_slab(0), 1.0 / 9.0).unwrap();
        let b = assemble_fd(&op, &d.double_slab(1), 1.0 / 18.0).unwrap();
        match index_sets(&d, &[a, b]) {
            Err(Error::NonConforming { .. }) => {}
            other => panic!("expected non-conforming error, got {other:?}"),
        }
    }

    #[test]
    fn hps_lattice_must_align() {
        let d = SlabDecomposition::decompose(Region::unit(2), 2, Topology::Open).unwrap();
        let bad = Backend::Hps { cell: [0.25, 0.25, 1.0], p: 6 };
        assert!(d.check_backend(&bad).is_err());
        let good = Backend::Hps { cell: [1.0 / 6.0, 0.25, 1.0], p: 6 };
        assert!(d.check_backend(&good).is_ok());
        let op = make_helmholtz(0.0, 2).unwrap();
        let systems: Vec<_> = (0..2).map(|j| assemble(&op, &d.double_slab(j), good).unwrap()).collect();
        let idx = index_sets(&d, &systems).unwrap();
        assert_eq!(idx.total(), 2 * 4 * 4);
    }

    #[test]
    fn single_slabs_tile_the_domain() {
        let d = SlabDecomposition::decompose(Region::unit(2), 3, Topology::Open).unwrap();
        let mut x = 0.0;
        for k in 0..d.n_single() {
            let (r, faces) = d.single_slab(k);
            assert!((r.lo[0] - x).abs() < 1e-15);
            x = r.hi[0];
            assert_eq!(faces[0], k.checked_sub(1));
        }
        assert!((x - 1.0).abs() < 1e-15);
        let p = SlabDecomposition::decompose(Region::unit(2), 4, Topology::Periodic).unwrap();
        assert_eq!(p.single_slab(3).1, [Some(3), Some(0)]);
        assert!((p.single_slab(3).0.hi[0] - 1.0).abs() < 1e-15);
    }
}
