//! CSV tables and the run manifest, written atomically.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// `{:?}` on f64 is the shortest string that parses back to the same bits.
fn format_cell(cell: &Cell, out: &mut String) {
    match cell {
        Cell::Float(v) => write!(out, "{v:?}").unwrap(),
        Cell::Int(v) => write!(out, "{v}").unwrap(),
        Cell::Bool(v) => write!(out, "{v}").unwrap(),
        Cell::Text(s) if s.contains([',', '"', '\n']) => write!(out, "\"{}\"", s.replace('"', "\"\"")).unwrap(),
        Cell::Text(s) => out.push_str(s),
        Cell::Empty => {}
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: Vec<String>) -> Self {
        Self { name: name.to_string(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, cell) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                format_cell(cell, &mut out);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub spec_path: String,
    pub spec_sha256: String,
    pub task: &'static str,
    pub status: &'static str,
    pub wall_time_seconds: f64,
    pub resolved_spec: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub failures: usize,
    pub summary: serde_json::Map<String, serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes every file to a temporary sibling first and renames only once all
/// of them were written, so an interrupted run leaves no partial results.
pub fn write_all(dir: &Path, files: &[(String, Vec<u8>)], overwrite: bool) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    if !overwrite {
        if let Some((name, _)) = files.iter().find(|(name, _)| dir.join(name).exists()) {
            return Err(io(&dir.join(name), "exists and output.overwrite is false"));
        }
    }
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io(dir, e))?;
        tmp.write_all(bytes).map_err(|e| io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| io(tmp.path(), e))?;
        staged.push((tmp, dir.join(name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| io(&target, e.error))?;
        written.push(target);
    }
    Ok(written)
}
