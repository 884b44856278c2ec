use crate::error::{CliError, Result};
use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

/// Leading columns of every table.
#[derive(Clone, Copy, Debug, Default)]
pub struct Provenance {
    pub seed: u64,
    pub side: Option<f64>,
    pub h: Option<f64>,
    pub epsilon: Option<f64>,
    pub t: Option<f64>,
}

impl Provenance {
    pub const COLUMNS: [&'static str; 5] = ["seed", "L", "h", "eps", "t"];

    pub fn with_side(self, side: f64) -> Self {
        Provenance { side: Some(side), ..self }
    }

    fn cells(&self) -> [String; 5] {
        [self.seed.to_string(), opt(self.side), opt(self.h), opt(self.epsilon), opt(self.t)]
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// A CSV table with provenance columns prepended to each row.
pub struct Table {
    pub name: String,
    columns: Vec<String>,
    rows: Vec<(Provenance, Vec<String>)>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, prov: Provenance, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push((prov, cells));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<&str> = Provenance::COLUMNS.iter().copied().chain(self.columns.iter().map(String::as_str)).collect();
        w.write_record(&header)?;
        for (p, cells) in &self.rows {
            w.write_record(p.cells().iter().chain(cells))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
        Ok(())
    }
}

/// Shorthand for formatting a row of numbers.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$($v.to_string()),*] };
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableEntry {
    pub file: String,
    pub rows: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    InvariantFailure,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::InvariantFailure => 2,
            Status::Error => 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub wall_time_s: f64,
    pub threads: usize,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub tables: Vec<TableEntry>,
    pub checks: Vec<Check>,
    pub run_dir: PathBuf,
}

/// Output sink for one run: tables, binary blobs and invariant checks, all
/// written as soon as they are produced so a failing run leaves its partial
/// results behind.
pub struct RunContext {
    pub dir: PathBuf,
    pub binary: bool,
    pub json: bool,
    pub tables: Vec<TableEntry>,
    pub checks: Vec<Check>,
}

impl RunContext {
    pub fn create(dir: PathBuf, binary: bool, json: bool) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for stale in ["FAILED", "run.json"] {
            let p = dir.join(stale);
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
            }
        }
        Ok(RunContext {
            dir,
            binary,
            json,
            tables: Vec::new(),
            checks: Vec::new(),
        })
    }

    pub fn table(&mut self, t: &Table) -> Result<()> {
        let file = format!("{}.csv", t.name);
        t.write(&self.dir.join(&file))?;
        self.tables.push(TableEntry { file, rows: t.len() });
        Ok(())
    }

    pub fn summary(&mut self, value: &serde_json::Value) -> Result<()> {
        if self.json {
            let path = self.dir.join("summary.json");
            let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            serde_json::to_writer_pretty(BufWriter::new(f), value)?;
        }
        Ok(())
    }

    /// Binary blob written by `write`, skipped when binary output is off.
    pub fn blob(&self, name: &str, write: impl FnOnce(BufWriter<File>) -> pamlab::Result<()>) -> Result<()> {
        if !self.binary {
            return Ok(());
        }
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write(BufWriter::new(f))?;
        Ok(())
    }

    /// Record `value <= limit`.
    pub fn check_le(&mut self, name: &str, value: f64, limit: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            pass: value <= limit,
            value,
            limit,
        });
    }

    /// Record a boolean property; `value` is 1 when it holds.
    pub fn check(&mut self, name: &str, holds: bool) {
        self.checks.push(Check {
            name: name.to_string(),
            pass: holds,
            value: if holds { 1.0 } else { 0.0 },
            limit: 1.0,
        });
    }
}
