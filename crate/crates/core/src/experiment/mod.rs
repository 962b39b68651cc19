//! Named experiments: configuration, presets, runners and CSV output.
//!
//! A run produces an [`Outcome`], a set of named tables plus summary lines.
//! Tables are written as `<output>/<name>_<table>.csv`, each starting with
//! a `# schema=1` comment line. Columns whose names start with `t_` hold
//! wall-clock seconds; every other column is reproducible bit for bit under
//! a fixed configuration.

mod config;
mod presets;
mod runners;
mod studies;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use config::{
    BackendKind, BumpSpec, Case, DecompSpec, DiscSpec, ExperimentConfig, GmresSpec, HbsSpec, Kind, ProblemPreset,
    ProblemSpec, StudySpec,
};
pub use presets::{preset, preset_names, preset_text};
pub use runners::{interface_samples, solve_once, SolveOptions, SolveRow};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) if x.is_nan() => String::new(),
            Cell::Float(x) => format!("{x:e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Floats compare bitwise, so equal runs compare equal even with NaN cells.
impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Float(a), Cell::Float(b)) => a.to_bits() == b.to_bits(),
            (Cell::Text(a), Cell::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("table {} has no column {name}", self.name)))
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i].as_f64().unwrap_or(f64::NAN)).collect())
    }

    pub fn texts(&self, name: &str) -> Result<Vec<String>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i].render()).collect())
    }

    /// Rows whose column `name` renders as `value`.
    pub fn filter(&self, name: &str, value: &str) -> Result<Table> {
        let i = self.column_index(name)?;
        Ok(Table {
            name: self.name.clone(),
            columns: self.columns.clone(),
            rows: self.rows.iter().filter(|r| r[i].render() == value).cloned().collect(),
        })
    }

    /// The table without timing columns.
    pub fn without_timings(&self) -> Table {
        let keep: Vec<usize> = (0..self.columns.len()).filter(|&i| !self.columns[i].starts_with("t_")).collect();
        Table {
            name: self.name.clone(),
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self.rows.iter().map(|r| keep.iter().map(|&i| r[i].clone()).collect()).collect(),
        }
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# schema={SCHEMA_VERSION}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub kind: Kind,
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
    pub seconds: f64,
}

impl Outcome {
    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::invalid(format!("experiment {} produced no table {name}", self.name)))
    }

    /// Writes each table to `dir`, via a temporary file and a rename so
    /// readers never see a partial CSV.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for t in &self.tables {
            let path = dir.join(format!("{}_{}.csv", self.name, t.name));
            let tmp = dir.join(format!(".{}_{}.csv.tmp", self.name, t.name));
            {
                let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
                t.write_csv(&mut f)?;
                f.flush()?;
            }
            fs::rename(&tmp, &path)?;
            paths.push(path);
        }
        let summary = dir.join(format!("{}_summary.txt", self.name));
        fs::write(&summary, self.summary.join("\n") + "\n")?;
        paths.push(summary);
        Ok(paths)
    }
}

/// Runs the experiment described by `cfg`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sw = crate::timing::Stopwatch::start();
    let (tables, summary) = match cfg.kind {
        Kind::Smoke => runners::smoke(cfg)?,
        Kind::SolveSweep => runners::solve_sweep(cfg)?,
        Kind::SelfConvergence => runners::self_convergence(cfg)?,
        Kind::OracleEquivalence => studies::oracle_equivalence(cfg)?,
        Kind::RedBlack => studies::red_black(cfg)?,
        Kind::Normality => studies::normality(cfg)?,
        Kind::SpectrumGallery => studies::spectrum_gallery(cfg)?,
        Kind::TSpectrumGrowth => studies::t_spectrum_growth(cfg)?,
        Kind::RankStudy => studies::rank_study(cfg)?,
        Kind::HbsError => studies::hbs_error(cfg)?,
    };
    Ok(Outcome {
        name: cfg.name.clone(),
        kind: cfg.kind,
        tables,
        summary,
        seconds: sw.seconds(),
    })
}
