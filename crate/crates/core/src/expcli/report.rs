//! Output files: fixed-format CSV tables and pretty JSON.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{LabError, Result};

/// One CSV cell. Numbers are written as `{:.16e}` so that every `f64`
/// round-trips.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<u32> for Cell {
    fn from(i: u32) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

/// A rectangular table with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(LabError::LengthMismatch { expected: self.headers.len(), got: row.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Values of a numeric column, `None` if the header is missing.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.headers.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[k] {
                    Cell::Num(x) => x,
                    Cell::Int(i) => i as f64,
                    _ => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(io_error(path))?;
        w.write_record(&self.headers).map_err(io_error(path))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io_error(path))?;
        }
        w.flush().map_err(|e| LabError::Config(format!("cannot write {}: {e}", path.display())))
    }
}

fn io_error<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> LabError + '_ {
    move |e| LabError::Config(format!("cannot write {}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(io_error(path))
}

/// Output directory, created on demand.
#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)
            .map_err(|e| LabError::Config(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

/// Named wall-clock phases.
#[derive(Debug)]
pub struct Stopwatch {
    start: Instant,
    lap: Instant,
    phases: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub phases: Vec<(String, f64)>,
}

impl Stopwatch {
    pub fn start() -> Self {
        let now = Instant::now();
        Self { start: now, lap: now, phases: Vec::new() }
    }

    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.phases.push((name.to_owned(), (now - self.lap).as_secs_f64()));
        self.lap = now;
    }

    pub fn finish(self) -> Timings {
        Timings { total_seconds: self.start.elapsed().as_secs_f64(), phases: self.phases }
    }
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Slope of `ln y` against `ln x`; `None` unless every value is positive.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).map(|(s, _)| s)
}
