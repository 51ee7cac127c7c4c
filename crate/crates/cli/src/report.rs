//! `report.json` and the CSV data files written next to it.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::config::{CliResult, SCHEMA_VERSION};

/// One declared check; any failing check makes the run exit with code 2.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    /// `value <= bound`, failing on `NaN`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check::new(name, value <= bound, format!("{value:e} <= {bound:e}"))
    }

    pub fn finite(name: impl Into<String>, value: f64) -> Self {
        Check::new(name, value.is_finite(), format!("{value:e} finite"))
    }
}

/// A CSV table; numbers are written with `{}` so they round-trip exactly.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Format a float for a CSV cell.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// A data file produced by a command.
pub enum DataFile {
    Table(Table),
    /// Pre-rendered CSV text, for writers provided by the library.
    Raw {
        name: String,
        bytes: Vec<u8>,
    },
}

impl DataFile {
    fn name(&self) -> &str {
        match self {
            DataFile::Table(t) => &t.name,
            DataFile::Raw { name, .. } => name,
        }
    }
}

/// What a subcommand hands back for reporting.
#[derive(Default)]
pub struct Output {
    pub checks: Vec<Check>,
    pub result: Value,
    pub files: Vec<DataFile>,
}

impl Output {
    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn table(&mut self, t: Table) {
        self.files.push(DataFile::Table(t));
    }

    pub fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push(DataFile::Raw {
            name: name.to_string(),
            bytes,
        });
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Serialize)]
struct Artifact {
    name: &'static str,
    version: &'static str,
    schema_version: u32,
}

#[derive(Serialize)]
struct Metadata {
    /// Seconds since the Unix epoch; the only non-deterministic field.
    timestamp: u64,
}

#[derive(Serialize)]
struct Report<'a> {
    artifact: Artifact,
    command: &'a str,
    seed: u64,
    grid: Value,
    /// The configuration as given.
    config: &'a Value,
    /// Command parameters with every default filled in.
    resolved: &'a Value,
    checks: &'a [Check],
    pass: bool,
    result: &'a Value,
    files: Vec<&'a str>,
    metadata: Metadata,
}

/// Everything `write` needs besides the command output.
pub struct Envelope<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub grid: Value,
    pub config: &'a Value,
    pub resolved: &'a Value,
}

/// Write `report.json` and the data files into `dir`.
pub fn write(dir: &Path, env: &Envelope<'_>, out: &Output) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    for f in &out.files {
        let path = dir.join(f.name());
        match f {
            DataFile::Table(t) => t.write(&path)?,
            DataFile::Raw { bytes, .. } => fs::write(&path, bytes)?,
        }
    }
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let report = Report {
        artifact: Artifact {
            name: "besov",
            version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
        },
        command: env.command,
        seed: env.seed,
        grid: env.grid.clone(),
        config: env.config,
        resolved: env.resolved,
        checks: &out.checks,
        pass: out.pass(),
        result: &out.result,
        files: out.files.iter().map(DataFile::name).collect(),
        metadata: Metadata { timestamp },
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::from)?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)?;
    Ok(())
}
