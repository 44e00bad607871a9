//! Report assembly, CSV tables and atomic artifact writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Version of the JSON report layout. Bumped whenever a field changes meaning.
pub const SCHEMA_VERSION: &str = "cyclegas.report/1";

/// One tolerance check: `value` must not exceed `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file_stem: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file_stem: &str, header: &[&str]) -> Self {
        Table {
            file_stem: file_stem.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let ser = |e: csv::Error| Error::Serialize(e.to_string());
        w.write_record(&self.header).map_err(ser)?;
        for row in &self.rows {
            w.write_record(row).map_err(ser)?;
        }
        w.into_inner().map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// Shortest round-tripping decimal form of a float.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Everything a run produces before it touches the disk.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_unix_seconds: Option<u64>,
    pub mode: &'static str,
    pub config: serde_json::Value,
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
    pub all_checks_passed: bool,
    /// File names of the CSV tables written next to the report.
    pub tables: Vec<String>,
    #[serde(skip)]
    pub table_data: Vec<Table>,
    #[serde(skip)]
    pub summary: Vec<String>,
}

impl Report {
    pub fn json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self).map_err(|e| Error::Serialize(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }

    /// Write the JSON report and every table into `dir` as `<name>.json` and
    /// `<name>_<table>.csv`. Each file goes to a temporary name first and all are renamed
    /// only once every write succeeded, so a failure leaves no partial artifacts.
    pub fn write(&self, dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
        let mut files = vec![(format!("{name}.json"), self.json()?)];
        for t in &self.table_data {
            files.push((format!("{name}_{}.csv", t.file_stem), t.to_csv()?));
        }
        write_atomically(dir, &files)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write all files or none of them.
pub fn write_atomically(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let pid = std::process::id();
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (name, bytes) in files {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.{pid}.tmp"));
        let res = fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        });
        staged.push((tmp.clone(), target));
        if let Err(e) = res {
            cleanup(&staged);
            return Err(io_err(&tmp, e));
        }
    }
    let mut done = Vec::new();
    for (i, (tmp, target)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, target) {
            cleanup(&staged[i..]);
            for p in &done {
                let _ = fs::remove_file(p);
            }
            return Err(io_err(target, e));
        }
        done.push(target.clone());
    }
    Ok(done)
}
