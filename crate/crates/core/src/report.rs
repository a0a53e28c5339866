//! Report envelopes and CSV series.
//!
//! Reports are pretty-printed JSON. Struct fields keep declaration order,
//! maps inside the payload are key-sorted, and the only wall-clock value is
//! the final `generated_at_unix` field, so two runs of the same
//! configuration differ in that one line.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{LabError, Result};
use crate::functionals::{MartingaleTrace, PathRecord};

pub const TOOL: &str = "lillab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope<'a> {
    pub tool: &'a str,
    pub version: &'a str,
    pub command: &'a str,
    pub status: &'a str,
    pub passed: bool,
    pub config: &'a Value,
    pub report: &'a Value,
    /// Seconds since the Unix epoch; `null` when the caller omits it.
    pub generated_at_unix: Option<u64>,
}

impl Envelope<'_> {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Seconds since the Unix epoch.
pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Removes the timestamp line so two envelopes can be compared.
pub fn strip_timestamp(json: &str) -> String {
    json.lines().filter(|l| !l.trim_start().starts_with("\"generated_at_unix\"")).collect::<Vec<_>>().join("\n")
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvSeries {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvSeries {
    pub fn new(header: &[&str]) -> CsvSeries {
        CsvSeries { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    /// Appends a row; numbers use Rust's shortest round-trip formatting and
    /// missing values are left empty.
    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| LabError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| LabError::Io(e.to_string()))
    }
}

pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Cell {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Cell {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Cell {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Cell {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v:?}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

/// Builds a row from heterogeneous values.
#[macro_export]
macro_rules! csv_row {
    ($($v:expr),* $(,)?) => { vec![$($crate::report::Cell::from($v)),*] };
}

/// Per-node trace `(path_id, t, state, I_t, M_t)` of decomposed paths.
pub fn trace_series(paths: &[(&PathRecord, &MartingaleTrace)]) -> CsvSeries {
    let mut s = CsvSeries::new(&["path_id", "t", "state", "I_t", "M_t"]);
    for (p, tr) in paths {
        for (j, x) in p.states.iter().enumerate() {
            s.push(vec![
                Cell::Int(p.path_index as usize),
                Cell::Num(p.grid.time(j)),
                Cell::Text(x.to_string()),
                Cell::Num(tr.i_values[j]),
                Cell::Num(tr.m_values[j]),
            ]);
        }
    }
    s
}

/// Writes `<dir>/<command>.json` and, when given, `<dir>/<command>.csv`.
/// Returns the written paths.
pub fn write_artifacts(dir: &Path, command: &str, json: &str, csv: Option<&str>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let p = dir.join(format!("{command}.json"));
    std::fs::write(&p, json)?;
    out.push(p);
    if let Some(c) = csv {
        let p = dir.join(format!("{command}.csv"));
        std::fs::write(&p, c)?;
        out.push(p);
    }
    Ok(out)
}
