//! Experiment configuration: a TOML document with fixed sections.
//!
//! Scalars that an experiment sweeps over (`decomp.H`, `decomp.n_ds`,
//! `disc.h`, `disc.p`, `disc.backend`, `hbs.k`) accept either a single value
//! or a list. Every problem found while reading a document is collected, so
//! a bad config reports all of its errors at once.

use std::path::PathBuf;

use toml::{Table, Value};

use crate::discretize::{Backend, Region};
use crate::error::{Error, Result};
use crate::hbs::{Arity, HbsConfig};
use crate::problem::{crystal_lattice, parse_bumps, Bump, Problem};
use crate::slabs::{SlabDecomposition, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Smoke,
    OracleEquivalence,
    RedBlack,
    SolveSweep,
    Normality,
    SpectrumGallery,
    TSpectrumGrowth,
    RankStudy,
    HbsError,
    SelfConvergence,
}

impl Kind {
    pub const ALL: [(&'static str, Kind); 10] = [
        ("smoke", Kind::Smoke),
        ("oracle_equivalence", Kind::OracleEquivalence),
        ("red_black", Kind::RedBlack),
        ("solve_sweep", Kind::SolveSweep),
        ("normality", Kind::Normality),
        ("spectrum_gallery", Kind::SpectrumGallery),
        ("t_spectrum_growth", Kind::TSpectrumGrowth),
        ("rank_study", Kind::RankStudy),
        ("hbs_error", Kind::HbsError),
        ("self_convergence", Kind::SelfConvergence),
    ];

    pub fn name(self) -> &'static str {
        Kind::ALL.iter().find(|(_, k)| *k == self).map(|(n, _)| *n).unwrap_or("?")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemPreset {
    Laplace2d,
    LaplaceRandom,
    Vc2d,
    Vc2dRandom,
    Helmholtz2d,
    Helmholtz3d,
    Waveguide2d,
}

impl ProblemPreset {
    pub const ALL: [(&'static str, ProblemPreset); 7] = [
        ("laplace2d", ProblemPreset::Laplace2d),
        ("laplace_random", ProblemPreset::LaplaceRandom),
        ("vc2d", ProblemPreset::Vc2d),
        ("vc2d_random", ProblemPreset::Vc2dRandom),
        ("helmholtz2d", ProblemPreset::Helmholtz2d),
        ("helmholtz3d", ProblemPreset::Helmholtz3d),
        ("waveguide2d", ProblemPreset::Waveguide2d),
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().find(|(n, _)| *n == s).map(|(_, p)| *p)
    }

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, p)| *p == self).map(|(n, _)| *n).unwrap_or("?")
    }

    fn natural_dim(self, requested: usize) -> usize {
        match self {
            ProblemPreset::Helmholtz3d => 3,
            ProblemPreset::LaplaceRandom => requested,
            _ => 2,
        }
    }
}

/// A problem preset with an optional wavenumber of its own, written
/// `preset` or `preset:kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case {
    pub preset: ProblemPreset,
    pub kappa: Option<f64>,
}

impl Case {
    pub fn parse(s: &str) -> Option<Self> {
        let (name, kappa) = match s.split_once(':') {
            Some((n, k)) => (n, Some(k.trim().parse::<f64>().ok()?)),
            None => (s, None),
        };
        Some(Case {
            preset: ProblemPreset::parse(name.trim())?,
            kappa,
        })
    }

    pub fn label(&self) -> String {
        match self.kappa {
            Some(k) => format!("{}:{k}", self.preset.name()),
            None => self.preset.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BumpSpec {
    None,
    /// `crystal_lattice(per_axis, width, amplitude)`.
    Lattice { per_axis: usize, width: f64, amplitude: f64 },
    /// Bump-list text, one `cx cy width amplitude` per line.
    Inline(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub preset: ProblemPreset,
    pub kappa: f64,
    pub seed: u64,
    pub dim: usize,
    pub source: [f64; 3],
    pub bumps: BumpSpec,
    /// Upper corner of the box `[0, hi]`.
    pub domain: Vec<f64>,
}

impl ProblemSpec {
    pub fn region(&self) -> Result<Region> {
        Region::new(&vec![0.0; self.domain.len()], &self.domain)
    }

    pub fn bumps(&self) -> Result<Vec<Bump>> {
        Ok(match &self.bumps {
            BumpSpec::None => Vec::new(),
            BumpSpec::Lattice { per_axis, width, amplitude } => crystal_lattice(*per_axis, *width, *amplitude),
            BumpSpec::Inline(text) => parse_bumps(text)?,
        })
    }

    pub fn build(&self) -> Result<Problem> {
        self.build_as(self.preset)
    }

    pub fn build_case(&self, case: &Case) -> Result<Problem> {
        let mut spec = self.clone();
        if let Some(k) = case.kappa {
            spec.kappa = k;
        }
        spec.build_as(case.preset)
    }

    /// The problem with this spec's parameters but another preset.
    pub fn build_as(&self, preset: ProblemPreset) -> Result<Problem> {
        match preset {
            ProblemPreset::Laplace2d => Ok(Problem::laplace2d()),
            ProblemPreset::LaplaceRandom => Ok(Problem::laplace_random(self.dim, self.seed)),
            ProblemPreset::Vc2d => Ok(Problem::vc2d(self.kappa)),
            ProblemPreset::Vc2dRandom => Ok(Problem::vc2d_random(self.kappa, self.seed)),
            ProblemPreset::Helmholtz2d => Problem::helmholtz2d(self.kappa),
            ProblemPreset::Helmholtz3d => Problem::helmholtz3d(self.kappa, self.source),
            ProblemPreset::Waveguide2d => Problem::waveguide2d(self.kappa, &self.bumps()?),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompSpec {
    /// Slab widths to sweep over.
    pub widths: Vec<f64>,
    pub topology: Topology,
}

impl DecompSpec {
    pub fn decompose(&self, region: &Region, width: f64) -> Result<SlabDecomposition> {
        SlabDecomposition::with_width(region.clone(), width, self.topology)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Fd,
    Hps,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Fd => "fd",
            BackendKind::Hps => "hps",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscSpec {
    pub backends: Vec<BackendKind>,
    pub h: Vec<f64>,
    /// Global cell counts per axis (HPS).
    pub tiling: Vec<usize>,
    pub p: Vec<usize>,
}

impl DiscSpec {
    /// Every discretization in the sweep, FD spacings first.
    pub fn backends(&self, region: &Region) -> Vec<Backend> {
        let mut out = Vec::new();
        for kind in &self.backends {
            match kind {
                BackendKind::Fd => out.extend(self.h.iter().map(|&h| Backend::Fd { h })),
                BackendKind::Hps => {
                    for &p in &self.p {
                        out.push(self.hps(region, p));
                    }
                }
            }
        }
        out
    }

    pub fn hps(&self, region: &Region, p: usize) -> Backend {
        let mut cell = [1.0; 3];
        for (d, c) in cell.iter_mut().enumerate().take(region.dim) {
            *c = region.len(d) / self.tiling[d] as f64;
        }
        Backend::Hps { cell, p }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbsSpec {
    pub enabled: bool,
    pub k: Vec<usize>,
    pub arity: Arity,
    pub leaf: Option<usize>,
    pub seed: u64,
}

impl HbsSpec {
    pub fn config(&self, k: usize) -> HbsConfig {
        let mut c = HbsConfig::new(k, self.arity, self.seed);
        c.leaf_size = self.leaf;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresSpec {
    /// The stopping tolerance is `tol_scale * H^tol_power`.
    pub tol_scale: f64,
    pub tol_power: i32,
    pub max_iter: usize,
    pub restart: Option<usize>,
}

impl GmresSpec {
    pub fn tol(&self, width: f64) -> f64 {
        self.tol_scale * width.powi(self.tol_power)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    /// Problem presets compared side by side (gallery and oracle runs).
    pub cases: Vec<Case>,
    pub levels: Vec<usize>,
    pub rank_tol: f64,
    /// Scale `rank_tol` by the largest singular value of each matrix.
    pub rank_relative: bool,
    pub probes: usize,
    /// Compare against a global sparse solve.
    pub global_check: bool,
    /// Order of the self-convergence reference.
    pub reference_p: usize,
    pub samples_per_cell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: Kind,
    pub output: PathBuf,
    pub problem: ProblemSpec,
    pub decomp: DecompSpec,
    pub disc: DiscSpec,
    pub hbs: HbsSpec,
    pub gmres: GmresSpec,
    pub study: StudySpec,
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["name", "kind", "output"]),
    ("problem", &["preset", "kappa", "seed", "dim", "source", "bumps", "lattice", "domain"]),
    ("decomp", &["H", "n_ds", "topology"]),
    ("disc", &["backend", "h", "tiling", "p"]),
    ("hbs", &["enabled", "k", "arity", "leaf", "seed"]),
    ("gmres", &["tol_scale", "tol_power", "max_iter", "restart"]),
    ("study", &["cases", "levels", "rank_tol", "rank_relative", "probes", "global_check", "reference_p", "samples_per_cell"]),
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[])
    }

    /// Parses `text`, then applies `key=value` overrides with dotted keys
    /// such as `disc.p=8` or `decomp.H=[0.25,0.125]`.
    pub fn parse_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(vec![format!("TOML syntax: {}", e.message())]))?;
        let mut errors = Vec::new();
        for o in overrides {
            if let Err(e) = apply_override(&mut doc, o) {
                errors.push(e);
            }
        }
        let cfg = Reader::new(&doc, errors).read();
        cfg
    }

    /// Renders the config back to TOML; `parse(to_toml())` is the identity.
    pub fn to_toml(&self) -> String {
        let mut doc = Table::new();
        let mut sec = |name: &str, entries: Vec<(&str, Value)>| {
            let t: Table = entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            doc.insert(name.into(), Value::Table(t));
        };
        let floats = |v: &[f64]| Value::Array(v.iter().map(|&x| Value::Float(x)).collect());
        let ints = |v: &[usize]| Value::Array(v.iter().map(|&x| Value::Integer(x as i64)).collect());
        let strs = |v: Vec<&str>| Value::Array(v.into_iter().map(|s| Value::String(s.into())).collect());
        sec(
            "experiment",
            vec![
                ("name", Value::String(self.name.clone())),
                ("kind", Value::String(self.kind.name().into())),
                ("output", Value::String(self.output.display().to_string())),
            ],
        );
        let p = &self.problem;
        let mut pe = vec![
            ("preset", Value::String(p.preset.name().into())),
            ("kappa", Value::Float(p.kappa)),
            ("seed", Value::Integer(p.seed as i64)),
            ("dim", Value::Integer(p.dim as i64)),
            ("source", floats(&p.source)),
            ("domain", floats(&p.domain)),
        ];
        match &p.bumps {
            BumpSpec::None => {}
            BumpSpec::Lattice { per_axis, width, amplitude } => pe.push((
                "lattice",
                Value::Array(vec![
                    Value::Float(*per_axis as f64),
                    Value::Float(*width),
                    Value::Float(*amplitude),
                ]),
            )),
            BumpSpec::Inline(t) => pe.push(("bumps", Value::String(t.clone()))),
        }
        sec("problem", pe);
        sec(
            "decomp",
            vec![
                ("H", floats(&self.decomp.widths)),
                (
                    "topology",
                    Value::String(
                        match self.decomp.topology {
                            Topology::Open => "open",
                            Topology::Periodic => "periodic",
                        }
                        .into(),
                    ),
                ),
            ],
        );
        sec(
            "disc",
            vec![
                ("backend", strs(self.disc.backends.iter().map(|b| b.name()).collect())),
                ("h", floats(&self.disc.h)),
                ("tiling", ints(&self.disc.tiling)),
                ("p", ints(&self.disc.p)),
            ],
        );
        let mut he = vec![
            ("enabled", Value::Boolean(self.hbs.enabled)),
            ("k", ints(&self.hbs.k)),
            (
                "arity",
                Value::String(
                    match self.hbs.arity {
                        Arity::Binary => "binary",
                        Arity::Quad => "quad",
                    }
                    .into(),
                ),
            ),
            ("seed", Value::Integer(self.hbs.seed as i64)),
        ];
        if let Some(l) = self.hbs.leaf {
            he.push(("leaf", Value::Integer(l as i64)));
        }
        sec("hbs", he);
        let mut ge = vec![
            ("tol_scale", Value::Float(self.gmres.tol_scale)),
            ("tol_power", Value::Integer(self.gmres.tol_power as i64)),
            ("max_iter", Value::Integer(self.gmres.max_iter as i64)),
        ];
        if let Some(r) = self.gmres.restart {
            ge.push(("restart", Value::Integer(r as i64)));
        }
        sec("gmres", ge);
        let s = &self.study;
        sec(
            "study",
            vec![
                (
                    "cases",
                    Value::Array(s.cases.iter().map(|c| Value::String(c.label())).collect()),
                ),
                ("levels", ints(&s.levels)),
                ("rank_tol", Value::Float(s.rank_tol)),
                ("rank_relative", Value::Boolean(s.rank_relative)),
                ("probes", Value::Integer(s.probes as i64)),
                ("global_check", Value::Boolean(s.global_check)),
                ("reference_p", Value::Integer(s.reference_p as i64)),
                ("samples_per_cell", Value::Integer(s.samples_per_cell as i64)),
            ],
        );
        toml::to_string(&doc).expect("config tables always serialize")
    }

    /// Problems the experiment touches: `study.cases` when given,
    /// otherwise the main problem.
    pub fn cases(&self) -> Vec<Case> {
        if self.study.cases.is_empty() {
            vec![Case {
                preset: self.problem.preset,
                kappa: None,
            }]
        } else {
            self.study.cases.clone()
        }
    }
}

fn apply_override(doc: &mut Table, spec: &str) -> std::result::Result<(), String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` is not of the form section.key=value"))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| format!("override key `{key}` needs a section, e.g. disc.p"))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let entry = doc
        .entry(section.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(field.to_string(), value);
            Ok(())
        }
        _ => Err(format!("`{section}` is not a section")),
    }
}

struct Reader<'a> {
    doc: &'a Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(doc: &'a Table, errors: Vec<String>) -> Self {
        Self { doc, errors }
    }

    fn get(&self, section: &str, key: &str) -> Option<&'a Value> {
        self.doc.get(section)?.as_table()?.get(key)
    }

    fn err(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn string(&mut self, s: &str, k: &str) -> Option<String> {
        match self.get(s, k)? {
            Value::String(v) => Some(v.clone()),
            other => {
                self.err(format!("{s}.{k}: expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn float_of(&mut self, s: &str, k: &str, v: &Value) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.err(format!("{s}.{k}: expected a number, got {}", other.type_str()));
                None
            }
        }
    }

    fn int_of(&mut self, s: &str, k: &str, v: &Value) -> Option<i64> {
        match v {
            Value::Integer(i) => Some(*i),
            other => {
                self.err(format!("{s}.{k}: expected an integer, got {}", other.type_str()));
                None
            }
        }
    }

    fn float(&mut self, s: &str, k: &str) -> Option<f64> {
        let v = self.get(s, k)?;
        self.float_of(s, k, v)
    }

    fn int(&mut self, s: &str, k: &str) -> Option<i64> {
        let v = self.get(s, k)?;
        self.int_of(s, k, v)
    }

    fn count(&mut self, s: &str, k: &str) -> Option<usize> {
        let i = self.int(s, k)?;
        if i < 0 {
            self.err(format!("{s}.{k}: must be nonnegative, got {i}"));
            return None;
        }
        Some(i as usize)
    }

    fn boolean(&mut self, s: &str, k: &str) -> Option<bool> {
        match self.get(s, k)? {
            Value::Boolean(b) => Some(*b),
            other => {
                self.err(format!("{s}.{k}: expected true or false, got {}", other.type_str()));
                None
            }
        }
    }

    fn items(&self, s: &str, k: &str) -> Option<Vec<&'a Value>> {
        match self.get(s, k)? {
            Value::Array(a) => Some(a.iter().collect()),
            v => Some(vec![v]),
        }
    }

    fn floats(&mut self, s: &str, k: &str) -> Option<Vec<f64>> {
        let items = self.items(s, k)?;
        let out: Vec<Option<f64>> = items.into_iter().map(|v| self.float_of(s, k, v)).collect();
        out.into_iter().collect()
    }

    fn counts(&mut self, s: &str, k: &str) -> Option<Vec<usize>> {
        let items = self.items(s, k)?;
        let mut out = Vec::new();
        for v in items {
            let i = self.int_of(s, k, v)?;
            if i < 0 {
                self.err(format!("{s}.{k}: entries must be nonnegative, got {i}"));
                return None;
            }
            out.push(i as usize);
        }
        Some(out)
    }

    fn strings(&mut self, s: &str, k: &str) -> Option<Vec<String>> {
        let items = self.items(s, k)?;
        let mut out = Vec::new();
        for v in items {
            match v {
                Value::String(x) => out.push(x.clone()),
                other => {
                    self.err(format!("{s}.{k}: expected strings, got {}", other.type_str()));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn check_keys(&mut self) {
        let mut unknown = Vec::new();
        for (section, value) in self.doc {
            let Some((_, keys)) = SCHEMA.iter().find(|(n, _)| n == section) else {
                unknown.push(format!("unknown section [{section}]"));
                continue;
            };
            match value {
                Value::Table(t) => {
                    for k in t.keys() {
                        if !keys.contains(&k.as_str()) {
                            unknown.push(format!("unknown key {section}.{k}"));
                        }
                    }
                }
                _ => unknown.push(format!("`{section}` must be a section")),
            }
        }
        self.errors.extend(unknown);
    }

    fn read(mut self) -> Result<ExperimentConfig> {
        self.check_keys();

        let name = self.string("experiment", "name");
        let kind = match self.string("experiment", "kind") {
            Some(k) => match Kind::ALL.iter().find(|(n, _)| *n == k) {
                Some((_, kind)) => Some(*kind),
                None => {
                    let names: Vec<_> = Kind::ALL.iter().map(|(n, _)| *n).collect();
                    self.err(format!("experiment.kind: unknown `{k}`, expected one of {}", names.join(", ")));
                    None
                }
            },
            None => {
                self.err("experiment.kind is required");
                None
            }
        };
        let output = self.string("experiment", "output").unwrap_or_else(|| "out".into());

        let preset = match self.string("problem", "preset") {
            Some(p) => {
                let parsed = ProblemPreset::parse(&p);
                if parsed.is_none() {
                    self.err(format!("problem.preset: unknown `{p}`"));
                }
                parsed
            }
            None => {
                self.err("problem.preset is required");
                None
            }
        };
        let kappa = self.float("problem", "kappa").unwrap_or(0.0);
        if !(kappa >= 0.0) {
            self.err(format!("problem.kappa must be >= 0, got {kappa}"));
        }
        let seed = self.count("problem", "seed").unwrap_or(1) as u64;
        let dim = self.count("problem", "dim").unwrap_or(2);
        if !(2..=3).contains(&dim) {
            self.err(format!("problem.dim must be 2 or 3, got {dim}"));
        }
        let source = match self.floats("problem", "source") {
            Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
            Some(v) => {
                self.err(format!("problem.source needs 3 coordinates, got {}", v.len()));
                [1.5, 0.5, 0.5]
            }
            None => [1.5, 0.5, 0.5],
        };
        let natural = preset.map(|p| p.natural_dim(dim)).unwrap_or(dim);
        let domain = self.floats("problem", "domain").unwrap_or_else(|| vec![1.0; natural]);
        if domain.len() != natural {
            self.err(format!(
                "problem.domain has {} extents but the problem is {natural}-dimensional",
                domain.len()
            ));
        }
        if domain.iter().any(|&d| !(d > 0.0)) {
            self.err("problem.domain extents must be positive");
        }
        let bumps = match (self.get("problem", "bumps"), self.get("problem", "lattice")) {
            (Some(_), Some(_)) => {
                self.err("problem.bumps and problem.lattice are mutually exclusive");
                BumpSpec::None
            }
            (Some(_), None) => {
                let text = self.string("problem", "bumps").unwrap_or_default();
                if let Err(e) = parse_bumps(&text) {
                    self.err(format!("problem.bumps: {e}"));
                }
                BumpSpec::Inline(text)
            }
            (None, Some(_)) => match self.floats("problem", "lattice") {
                Some(v) if v.len() == 3 && v[0] >= 1.0 && v[0].fract() == 0.0 => BumpSpec::Lattice {
                    per_axis: v[0] as usize,
                    width: v[1],
                    amplitude: v[2],
                },
                Some(_) => {
                    self.err("problem.lattice must be [per_axis, width, amplitude] with integer per_axis >= 1");
                    BumpSpec::None
                }
                None => BumpSpec::None,
            },
            (None, None) => BumpSpec::None,
        };
        if preset == Some(ProblemPreset::Waveguide2d) && !(kappa > 0.0) {
            self.err("problem.kappa must be positive for waveguide2d");
        }

        let topology = match self.string("decomp", "topology").as_deref() {
            None | Some("open") => Topology::Open,
            Some("periodic") => Topology::Periodic,
            Some(other) => {
                self.err(format!("decomp.topology: expected open or periodic, got `{other}`"));
                Topology::Open
            }
        };
        let len_x = domain.first().copied().unwrap_or(1.0);
        let widths = match (self.floats("decomp", "H"), self.counts("decomp", "n_ds")) {
            (Some(_), Some(_)) => {
                self.err("decomp.H and decomp.n_ds are mutually exclusive");
                Vec::new()
            }
            (Some(h), None) => h,
            (None, Some(n)) => n
                .iter()
                .map(|&n| match topology {
                    Topology::Open => len_x / (n + 1) as f64,
                    Topology::Periodic => len_x / n.max(1) as f64,
                })
                .collect(),
            (None, None) => {
                self.err("decomp needs H or n_ds");
                Vec::new()
            }
        };
        for &w in &widths {
            let slabs = len_x / w;
            if !(w > 0.0) || (slabs - slabs.round()).abs() > 1e-9 * slabs.max(1.0) {
                self.err(format!("decomp.H = {w} does not divide the domain length {len_x}"));
            } else if topology == Topology::Open && slabs.round() < 2.0 {
                self.err(format!("decomp.H = {w} leaves no interior interface"));
            }
        }

        let backends = match self.strings("disc", "backend") {
            Some(list) => list
                .iter()
                .filter_map(|b| match b.as_str() {
                    "fd" => Some(BackendKind::Fd),
                    "hps" => Some(BackendKind::Hps),
                    other => {
                        self.err(format!("disc.backend: expected fd or hps, got `{other}`"));
                        None
                    }
                })
                .collect(),
            None => {
                self.err("disc.backend is required");
                Vec::new()
            }
        };
        let h = self.floats("disc", "h").unwrap_or_default();
        let tiling = self.counts("disc", "tiling").unwrap_or_default();
        let p = self.counts("disc", "p").unwrap_or_default();
        if backends.contains(&BackendKind::Fd) {
            if h.is_empty() {
                self.err("disc.h is required for the fd backend");
            }
            for &hv in &h {
                if !(hv > 0.0) {
                    self.err(format!("disc.h must be positive, got {hv}"));
                    continue;
                }
                for &w in &widths {
                    let r = w / hv;
                    if (r - r.round()).abs() > 1e-9 * r.max(1.0) || r.round() < 1.0 {
                        self.err(format!("disc.h = {hv} does not divide slab width {w}"));
                    }
                }
            }
        }
        if backends.contains(&BackendKind::Hps) {
            if p.is_empty() {
                self.err("disc.p is required for the hps backend");
            }
            for &pv in &p {
                if pv < 3 {
                    self.err(format!("disc.p must be at least 3, got {pv}"));
                }
            }
            if tiling.len() != natural {
                self.err(format!(
                    "disc.tiling needs {natural} cell counts for the hps backend, got {}",
                    tiling.len()
                ));
            } else if tiling.contains(&0) {
                self.err("disc.tiling entries must be positive");
            } else {
                let cell = len_x / tiling[0] as f64;
                for &w in &widths {
                    let r = w / cell;
                    if (r - r.round()).abs() > 1e-9 * r.max(1.0) || r.round() < 1.0 {
                        self.err(format!("slab width {w} is not a whole number of hps cells (cell width {cell})"));
                    }
                }
            }
        }

        let enabled = self.boolean("hbs", "enabled").unwrap_or(false);
        let k = self.counts("hbs", "k").unwrap_or_else(|| vec![20]);
        let arity = match self.string("hbs", "arity") {
            Some(a) => a.parse::<Arity>().unwrap_or_else(|_| {
                self.err(format!("hbs.arity: expected binary or quad, got `{a}`"));
                Arity::Binary
            }),
            None if natural == 3 => Arity::Quad,
            None => Arity::Binary,
        };
        let leaf = self.count("hbs", "leaf");
        let hseed = self.count("hbs", "seed").unwrap_or(0) as u64;
        if k.is_empty() || k.contains(&0) {
            self.err("hbs.k entries must be positive");
        }
        if let Some(l) = leaf {
            for &kv in &k {
                if l <= kv {
                    self.err(format!("hbs.leaf = {l} must exceed hbs.k = {kv}"));
                }
            }
        }
        if natural == 3 && arity == Arity::Binary && self.get("hbs", "arity").is_some() {
            self.err("hbs.arity binary only supports 1D interfaces (2D problems)");
        }
        if natural == 2 && arity == Arity::Quad {
            self.err("hbs.arity quad needs 2D interfaces (3D problems)");
        }

        let tol_scale = self.float("gmres", "tol_scale").unwrap_or(1e-5);
        let tol_power = self.int("gmres", "tol_power").unwrap_or(2) as i32;
        let max_iter = self.count("gmres", "max_iter").unwrap_or(500);
        let restart = self.count("gmres", "restart");
        if !(tol_scale > 0.0) {
            self.err(format!("gmres.tol_scale must be positive, got {tol_scale}"));
        }
        if max_iter == 0 {
            self.err("gmres.max_iter must be positive");
        }
        if restart == Some(0) {
            self.err("gmres.restart must be positive when given");
        }

        let cases = self
            .strings("study", "cases")
            .unwrap_or_default()
            .iter()
            .filter_map(|c| {
                let p = Case::parse(c);
                if p.is_none() {
                    self.err(format!("study.cases: expected preset or preset:kappa, got `{c}`"));
                }
                p
            })
            .collect();
        let levels = self.counts("study", "levels").unwrap_or_else(|| vec![2, 3]);
        let rank_tol = self.float("study", "rank_tol").unwrap_or(1e-5);
        let rank_relative = self.boolean("study", "rank_relative").unwrap_or(false);
        let probes = self.count("study", "probes").unwrap_or(8);
        let global_check = self.boolean("study", "global_check").unwrap_or(false);
        let reference_p = self.count("study", "reference_p").unwrap_or(0);
        let samples_per_cell = self.count("study", "samples_per_cell").unwrap_or(5);
        if !(rank_tol > 0.0) {
            self.err(format!("study.rank_tol must be positive, got {rank_tol}"));
        }
        if levels.contains(&0) {
            self.err("study.levels start at 1 (the root)");
        }
        if samples_per_cell == 0 {
            self.err("study.samples_per_cell must be positive");
        }
        if kind == Some(Kind::SelfConvergence) {
            if !backends.iter().all(|b| *b == BackendKind::Hps) {
                self.err("self_convergence needs disc.backend = \"hps\"");
            }
            if p.iter().any(|&pv| pv >= reference_p) {
                self.err("study.reference_p must exceed every disc.p");
            }
            if natural != 2 {
                self.err("self_convergence supports 2D problems only");
            }
        }
        if widths.is_empty() && self.errors.is_empty() {
            self.err("decomp.H is empty");
        }

        if !self.errors.is_empty() {
            return Err(Error::Config(self.errors));
        }
        Ok(ExperimentConfig {
            name: name.unwrap_or_else(|| kind.map(Kind::name).unwrap_or("experiment").to_string()),
            kind: kind.expect("checked"),
            output: PathBuf::from(output),
            problem: ProblemSpec {
                preset: preset.expect("checked"),
                kappa,
                seed,
                dim: natural,
                source,
                bumps,
                domain,
            },
            decomp: DecompSpec { widths, topology },
            disc: DiscSpec { backends, h, tiling, p },
            hbs: HbsSpec { enabled, k, arity, leaf, seed: hseed },
            gmres: GmresSpec { tol_scale, tol_power, max_iter, restart },
            study: StudySpec {
                cases,
                levels,
                rank_tol,
                rank_relative,
                probes,
                global_check,
                reference_p,
                samples_per_cell,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[experiment]
kind = "smoke"
[problem]
preset = "laplace2d"
[decomp]
n_ds = 3
[disc]
backend = "fd"
h = 0.0625
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.kind, Kind::Smoke);
        assert_eq!(c.decomp.widths.len(), 1);
        assert_eq!(c.decomp.widths[0], 0.25);
        assert_eq!(c.hbs.arity, Arity::Binary);
        assert_eq!(c.gmres.tol_power, 2);
    }

    #[test]
    fn errors_are_listed_together() {
        let text = r#"
[experiment]
kind = "nope"
[problem]
preset = "laplace2d"
kappa = -1
colour = 3
[decomp]
H = 0.3
[disc]
backend = "fem"
[extra]
"#;
        let Err(Error::Config(errs)) = ExperimentConfig::parse(text) else {
            panic!("expected config errors");
        };
        let joined = errs.join("\n");
        for needle in ["experiment.kind", "problem.kappa", "problem.colour", "decomp.H = 0.3", "disc.backend", "[extra]"] {
            assert!(joined.contains(needle), "missing `{needle}` in\n{joined}");
        }
    }

    #[test]
    fn overrides_replace_values_and_lists() {
        let c = ExperimentConfig::parse_with(MINIMAL, &["disc.h=[0.125, 0.0625]".into(), "hbs.k=12".into()]).unwrap();
        assert_eq!(c.disc.h, vec![0.125, 0.0625]);
        assert_eq!(c.hbs.k, vec![12]);
        assert!(ExperimentConfig::parse_with(MINIMAL, &["nodot=1".into()]).is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn fd_spacing_must_divide_slabs() {
        let r = ExperimentConfig::parse_with(MINIMAL, &["disc.h=0.3".into()]);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
