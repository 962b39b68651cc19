//! PDE coefficient fields, boundary data and analytic reference solutions.
//!
//! Every operator has the form
//!
//! ```text
//!   A u = -sum_d a_dd(x) d^2u/dx_d^2 + c(x) u
//! ```
//!
//! with strictly positive diagonal coefficients. Helmholtz problems carry
//! `c = -kappa^2`. One-dimensional operators exist for strip sections and
//! hand-checkable tests; the experiments use two and three dimensions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A pure, reentrant scalar function of a spatial point.
pub type Field = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

fn field(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Field {
    Arc::new(f)
}

fn constant(v: f64) -> Field {
    field(move |_| v)
}

#[derive(Clone)]
pub struct EllipticOperator {
    dim: usize,
    diffusion: Vec<Field>,
    reaction: Field,
    name: String,
}

impl fmt::Debug for EllipticOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EllipticOperator")
            .field("dim", &self.dim)
            .field("name", &self.name)
            .finish()
    }
}

impl EllipticOperator {
    pub fn new(
        dim: usize,
        diffusion: Vec<Field>,
        reaction: Field,
        name: impl Into<String>,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if diffusion.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "diffusion coefficients",
                expected: dim,
                got: diffusion.len(),
            });
        }
        Ok(Self {
            dim,
            diffusion,
            reaction,
            name: name.into(),
        })
    }

    /// The same operator with its coefficients extended periodically in
    /// `x` from the cell `[lo, lo + len)`.
    pub fn periodic_in_x(&self, lo: f64, len: f64) -> Self {
        Self {
            dim: self.dim,
            diffusion: self.diffusion.iter().map(|f| wrap_x(f, lo, len)).collect(),
            reaction: wrap_x(&self.reaction, lo, len),
            name: self.name.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Second-order coefficient `a_{axis,axis}` at `x`.
    #[inline]
    pub fn diffusion(&self, axis: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.diffusion[axis])(x)
    }

    /// Zero-order coefficient `c` at `x`.
    #[inline]
    pub fn reaction(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.reaction)(x)
    }

    /// Evaluates every coefficient at `x`, rejecting non-positive diffusion.
    pub fn coefficients_at(&self, x: &[f64]) -> Result<([f64; 3], f64)> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "coefficient query point",
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut a = [0.0; 3];
        for (d, slot) in a.iter_mut().enumerate().take(self.dim) {
            let v = self.diffusion(d, x);
            if !(v > 0.0) {
                return Err(Error::invalid(format!(
                    "diffusion coefficient a_{d}{d} = {v} is not positive at {x:?}"
                )));
            }
            *slot = v;
        }
        Ok((a, self.reaction(x)))
    }

    /// Returns a copy with `shift` added to the zero-order coefficient.
    pub fn with_reaction_shift(self, shift: f64) -> Self {
        let base = self.reaction.clone();
        Self {
            reaction: field(move |x| base(x) + shift),
            name: format!("{}{:+}u", self.name, shift),
            ..self
        }
    }

    /// Applies the continuum operator to a smooth function by fourth-order
    /// central differences with step `step`.
    pub fn apply_continuum(&self, u: &Field, x: &[f64], step: f64) -> f64 {
        let mut acc = 0.0;
        let mut y = x.to_vec();
        for d in 0..self.dim {
            let mut sample = |off: f64| {
                y[d] = x[d] + off;
                let v = u(&y);
                y[d] = x[d];
                v
            };
            let uxx = (-sample(2.0 * step) + 16.0 * sample(step) - 30.0 * sample(0.0)
                + 16.0 * sample(-step)
                - sample(-2.0 * step))
                / (12.0 * step * step);
            acc -= self.diffusion(d, x) * uxx;
        }
        acc + self.reaction(x) * u(x)
    }
}

/// Constant-coefficient `-Δu - κ²u`; `kappa = 0` gives the Laplace operator.
pub fn make_helmholtz(kappa: f64, dim: usize) -> Result<EllipticOperator> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!("wavenumber must be >= 0, got {kappa}")));
    }
    let name = if kappa == 0.0 {
        format!("laplace{dim}d")
    } else {
        format!("helmholtz{dim}d(k={kappa})")
    };
    EllipticOperator::new(dim, vec![constant(1.0); dim], constant(-kappa * kappa), name)
}

/// `-(1 + cos(2πx)/2) u_xx - (1 + x² sin(3πy)/2) u_yy`.
pub fn make_variable_coefficient_2d() -> EllipticOperator {
    let axx = field(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
    let ayy = field(|x| 1.0 + 0.5 * x[0] * x[0] * (3.0 * PI * x[1]).sin());
    EllipticOperator::new(2, vec![axx, ayy], constant(0.0), "vc2d")
        .expect("static operator is well formed")
}

/// Gaussian bump `amplitude * exp(-|x - center|² / (2 width²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    fn eval(&self, x: &[f64]) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        self.amplitude * (-(dx * dx + dy * dy) / (2.0 * self.width * self.width)).exp()
    }
}

/// Sum of bumps; the waveguide's relative speed is `1 - b`.
pub fn bump_field(bumps: &[Bump]) -> Field {
    let bumps = bumps.to_vec();
    field(move |x| bumps.iter().map(|b| b.eval(x)).sum())
}

/// `-Δu - κ²(1 - b(x,y)) u = 0` with `u = 1` on the boundary.
pub fn make_waveguide(kappa: f64, bumps: &[Bump]) -> Result<(EllipticOperator, BoundaryData)> {
    if !(kappa > 0.0) {
        return Err(Error::invalid(format!("wavenumber must be positive, got {kappa}")));
    }
    for (i, b) in bumps.iter().enumerate() {
        if !(0.0..1.0).contains(&b.amplitude) {
            return Err(Error::invalid(format!(
                "bump {i} has amplitude {} outside [0, 1)",
                b.amplitude
            )));
        }
        if !(b.width > 0.0) {
            return Err(Error::invalid(format!("bump {i} has non-positive width")));
        }
    }
    let b = bump_field(bumps);
    let k2 = kappa * kappa;
    let reaction = field(move |x| -k2 * (1.0 - b(x)));
    let op = EllipticOperator::new(2, vec![constant(1.0); 2], reaction, format!("waveguide(k={kappa})"))?;
    Ok((op, BoundaryData::new(constant(1.0), constant(0.0))))
}

/// Square lattice of identical bumps on `[0,1]²` with the row through
/// `y = 1/2` left empty, which opens a straight channel along x.
pub fn crystal_lattice(per_axis: usize, width: f64, amplitude: f64) -> Vec<Bump> {
    let mut out = Vec::new();
    let spacing = 1.0 / per_axis as f64;
    let skip = per_axis / 2;
    for iy in 0..per_axis {
        if iy == skip {
            continue;
        }
        for ix in 0..per_axis {
            out.push(Bump {
                center: [(ix as f64 + 0.5) * spacing, (iy as f64 + 0.5) * spacing],
                width,
                amplitude,
            });
        }
    }
    out
}

/// Parses a bump list: one `cx cy width amplitude` per line, `#` comments.
pub fn parse_bumps(text: &str) -> Result<Vec<Bump>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bump line {}: {e}", lineno + 1)))?;
        if vals.len() != 4 {
            return Err(Error::invalid(format!(
                "bump line {}: expected 4 numbers, got {}",
                lineno + 1,
                vals.len()
            )));
        }
        out.push(Bump {
            center: [vals[0], vals[1]],
            width: vals[2],
            amplitude: vals[3],
        });
    }
    Ok(out)
}

fn wrap_x(f: &Field, lo: f64, len: f64) -> Field {
    let f = f.clone();
    Arc::new(move |x: &[f64]| {
        let mut y = [0.0; 3];
        y[..x.len()].copy_from_slice(x);
        y[0] = lo + (x[0] - lo).rem_euclid(len);
        f(&y[..x.len()])
    })
}

/// Dirichlet data `f` on the boundary and body load `g` in the interior.
#[derive(Clone)]
pub struct BoundaryData {
    pub dirichlet: Field,
    pub load: Field,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BoundaryData")
    }
}

impl BoundaryData {
    pub fn new(dirichlet: Field, load: Field) -> Self {
        Self { dirichlet, load }
    }

    pub fn zero() -> Self {
        Self::new(constant(0.0), constant(0.0))
    }

    /// Data extended periodically in `x` from `[lo, lo + len)`.
    pub fn periodic_in_x(&self, lo: f64, len: f64) -> Self {
        Self::new(wrap_x(&self.dirichlet, lo, len), wrap_x(&self.load, lo, len))
    }

    /// Dirichlet data taken from `u`, with zero load.
    pub fn from_solution(u: Field) -> Self {
        Self::new(u, constant(0.0))
    }
}

/// Seeded random trigonometric polynomial with wave numbers up to `max_mode`.
pub fn random_smooth_field(seed: u64, dim: usize, max_mode: usize) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms: Vec<([f64; 3], f64, f64)> = Vec::new();
    let m = max_mode as i64;
    let modes = (2 * m + 1).pow(dim as u32) as usize;
    for idx in 0..modes {
        let mut k = [0.0; 3];
        let mut rem = idx;
        for kd in k.iter_mut().take(dim) {
            *kd = (rem % (2 * max_mode + 1)) as f64 - m as f64;
            rem /= 2 * max_mode + 1;
        }
        let amp: f64 = rng.random_range(-1.0..1.0);
        let phase: f64 = rng.random_range(0.0..(2.0 * PI));
        terms.push((k, amp, phase));
    }
    field(move |x| {
        terms
            .iter()
            .map(|(k, a, ph)| {
                let arg: f64 = x.iter().zip(k.iter()).map(|(xi, ki)| xi * ki).sum();
                a * (PI * arg + ph).cos()
            })
            .sum()
    })
}

/// Exact solution used to measure volume errors.
#[derive(Clone)]
pub struct ReferenceSolution {
    pub solution: Field,
    pub provenance: String,
}

impl fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceSolution")
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl ReferenceSolution {
    /// Largest violation of `A u* = g` (interior points) and `u* = f`
    /// (boundary points), using a fourth-order difference with `step`.
    pub fn self_check(
        &self,
        op: &EllipticOperator,
        data: &BoundaryData,
        interior: &[Vec<f64>],
        boundary: &[Vec<f64>],
        step: f64,
    ) -> f64 {
        let pde = interior
            .iter()
            .map(|x| (op.apply_continuum(&self.solution, x, step) - (data.load)(x)).abs());
        let bc = boundary
            .iter()
            .map(|x| ((self.solution)(x) - (data.dirichlet)(x)).abs());
        pde.chain(bc).fold(0.0, f64::max)
    }
}

/// Operator, data and optional exact solution bundled together.
#[derive(Clone, Debug)]
pub struct Problem {
    pub op: EllipticOperator,
    pub data: BoundaryData,
    pub reference: Option<ReferenceSolution>,
}

impl Problem {
    /// Harmonic `sin(πx) sinh(πy) / sinh(π)` on the unit square.
    pub fn laplace2d() -> Self {
        let u = field(|x| (PI * x[0]).sin() * (PI * x[1]).sinh() / PI.sinh());
        Self {
            op: make_helmholtz(0.0, 2).expect("valid"),
            data: BoundaryData::from_solution(u.clone()),
            reference: Some(ReferenceSolution {
                solution: u,
                provenance: "harmonic sin(pi x) sinh(pi y)/sinh(pi)".into(),
            }),
        }
    }

    /// Laplace with seeded random smooth Dirichlet data and no reference.
    pub fn laplace_random(dim: usize, seed: u64) -> Self {
        Self {
            op: make_helmholtz(0.0, dim).expect("valid"),
            data: BoundaryData::from_solution(random_smooth_field(seed, dim, 3)),
            reference: None,
        }
    }

    /// Variable-coefficient operator with a manufactured solution
    /// `e^x sin(2y) + x² y`; `damping` adds `-damping² u`.
    pub fn vc2d(damping: f64) -> Self {
        let mut op = make_variable_coefficient_2d();
        if damping != 0.0 {
            op = op.with_reaction_shift(-damping * damping);
        }
        let u = field(|x| x[0].exp() * (2.0 * x[1]).sin() + x[0] * x[0] * x[1]);
        let op_c = op.clone();
        let load = field(move |x| {
            let uxx = x[0].exp() * (2.0 * x[1]).sin() + 2.0 * x[1];
            let uyy = -4.0 * x[0].exp() * (2.0 * x[1]).sin();
            let uval = x[0].exp() * (2.0 * x[1]).sin() + x[0] * x[0] * x[1];
            -op_c.diffusion(0, x) * uxx - op_c.diffusion(1, x) * uyy + op_c.reaction(x) * uval
        });
        Self {
            op,
            data: BoundaryData::new(u.clone(), load),
            reference: Some(ReferenceSolution {
                solution: u,
                provenance: "manufactured e^x sin(2y) + x^2 y".into(),
            }),
        }
    }

    /// Variable-coefficient operator with seeded random boundary data.
    pub fn vc2d_random(damping: f64, seed: u64) -> Self {
        let mut op = make_variable_coefficient_2d();
        if damping != 0.0 {
            op = op.with_reaction_shift(-damping * damping);
        }
        Self {
            op,
            data: BoundaryData::from_solution(random_smooth_field(seed, 2, 3)),
            reference: None,
        }
    }

    /// Helmholtz with the point-source solution `cos(κr)/r` centred at
    /// `source`, which must lie outside the unit box.
    pub fn helmholtz3d(kappa: f64, source: [f64; 3]) -> Result<Self> {
        let dist = source
            .iter()
            .map(|&s| if s < 0.0 { -s } else if s > 1.0 { s - 1.0 } else { 0.0 })
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt();
        if dist < 0.25 {
            return Err(Error::invalid(format!(
                "point source {source:?} is {dist:.3} from the domain, need >= 0.25"
            )));
        }
        let u = field(move |x| {
            let r = ((x[0] - source[0]).powi(2) + (x[1] - source[1]).powi(2) + (x[2] - source[2]).powi(2))
                .sqrt();
            (kappa * r).cos() / r
        });
        Ok(Self {
            op: make_helmholtz(kappa, 3)?,
            data: BoundaryData::from_solution(u.clone()),
            reference: Some(ReferenceSolution {
                solution: u,
                provenance: format!("point source cos(k r)/r at {source:?}"),
            }),
        })
    }

    /// 2D Helmholtz with a plane-wave solution at angle 0.3 rad.
    pub fn helmholtz2d(kappa: f64) -> Result<Self> {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let u = field(move |x| (kappa * (c * x[0] + s * x[1])).cos());
        Ok(Self {
            op: make_helmholtz(kappa, 2)?,
            data: BoundaryData::from_solution(u.clone()),
            reference: Some(ReferenceSolution {
                solution: u,
                provenance: "plane wave".into(),
            }),
        })
    }

    pub fn waveguide2d(kappa: f64, bumps: &[Bump]) -> Result<Self> {
        let (op, data) = make_waveguide(kappa, bumps)?;
        Ok(Self {
            op,
            data,
            reference: None,
        })
    }

    /// Same operator with homogeneous data.
    pub fn homogeneous(&self) -> Self {
        Self {
            op: self.op.clone(),
            data: BoundaryData::zero(),
            reference: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helmholtz_zero_is_laplace() {
        let op = make_helmholtz(0.0, 2).unwrap();
        assert_eq!(op.reaction(&[0.3, 0.7]), 0.0);
        assert_eq!(op.diffusion(1, &[0.3, 0.7]), 1.0);
        let op3 = make_helmholtz(5.0, 3).unwrap();
        assert_eq!(op3.reaction(&[0.1, 0.2, 0.3]), -25.0);
        let rank_study = make_helmholtz(9.80177, 3).unwrap();
        assert!((rank_study.reaction(&[0.0; 3]) + 9.80177f64.powi(2)).abs() < 1e-12);
        assert!(make_helmholtz(-1.0, 2).is_err());
    }

    #[test]
    fn variable_coefficients_match_closed_form() {
        let op = make_variable_coefficient_2d();
        assert!((op.diffusion(0, &[0.0, 0.4]) - 1.5).abs() < 1e-15);
        assert!((op.diffusion(1, &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((op.diffusion(1, &[1.0, 1.0 / 6.0]) - 1.5).abs() < 1e-14);
        assert!((op.diffusion(0, &[0.25, 0.9]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn waveguide_rejects_sign_flipping_bumps() {
        let ok = make_waveguide(10.0, &[]).unwrap().0;
        assert_eq!(ok.reaction(&[0.5, 0.5]), -100.0);
        let bad = Bump {
            center: [0.5, 0.5],
            width: 0.1,
            amplitude: 1.5,
        };
        assert!(make_waveguide(10.0, &[bad]).is_err());
    }

    #[test]
    fn crystal_speed_stays_in_unit_interval() {
        let bumps = crystal_lattice(10, 0.02, 0.8);
        let b = bump_field(&bumps);
        for i in 0..=50 {
            for j in 0..=50 {
                let x = [i as f64 / 50.0, j as f64 / 50.0];
                let s = 1.0 - b(&x);
                assert!(s > 0.0 && s <= 1.0, "1-b = {s} at {x:?}");
            }
        }
        // the channel row is free of bumps
        assert!(b(&[0.37, 0.55]) < 1e-4);
    }

    #[test]
    fn bump_file_round_trip() {
        let parsed = parse_bumps("# cx cy w a\n0.5 0.25 0.02 0.7\n\n0.1 0.9 0.03 0.2 # tail\n").unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1].center, [0.1, 0.9]);
        assert!(parse_bumps("0.1 0.2 0.3").is_err());
    }

    #[test]
    fn references_satisfy_their_pde() {
        let pts: Vec<Vec<f64>> = (1..5).map(|i| vec![0.2 * i as f64, 0.13 * i as f64 + 0.1]).collect();
        let bnd: Vec<Vec<f64>> = (0..5).map(|i| vec![0.0, 0.25 * i as f64]).collect();
        for p in [Problem::laplace2d(), Problem::vc2d(0.0), Problem::vc2d(10.0), Problem::helmholtz2d(7.0).unwrap()] {
            let r = p.reference.as_ref().unwrap();
            let res = r.self_check(&p.op, &p.data, &pts, &bnd, 1e-3);
            assert!(res < 1e-7, "{}: residual {res}", p.op.name());
        }
        let p = Problem::helmholtz3d(5.0, [-0.5, -0.5, -0.5]).unwrap();
        let pts3: Vec<Vec<f64>> = (1..5).map(|i| vec![0.2 * i as f64, 0.5, 0.1 * i as f64]).collect();
        let res = p.reference.as_ref().unwrap().self_check(&p.op, &p.data, &pts3, &[], 1e-3);
        assert!(res < 1e-6, "helmholtz3d residual {res}");
        assert!(Problem::helmholtz3d(5.0, [0.5, 0.5, -0.1]).is_err());
    }
}
