//! CSV tables, JSON summaries and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    B(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::U(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_float(*v),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.replace([',', '\n'], ";"),
            Cell::B(b) => b.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File name without extension.
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }
}

/// Per-stage status recorded in the manifest and the summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub stage: String,
    pub status: String,
    pub message: String,
}

impl Diagnostic {
    pub fn ok(stage: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            stage: stage.into(),
            status: "ok".into(),
            message: message.into(),
        }
    }

    pub fn failed(stage: &str, err: &CliError) -> Self {
        Diagnostic {
            stage: stage.into(),
            status: err.kind().into(),
            message: err.to_string(),
        }
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    pub diagnostics: Vec<Diagnostic>,
    pub warnings: Vec<String>,
    pub seeds: Vec<u64>,
    /// Extra JSON files as `(file name, content)`.
    pub documents: Vec<(String, Value)>,
}

impl Report {
    pub fn put(&mut self, key: &str, value: impl Serialize) {
        self.summary
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Machine-readable error record.
pub fn error_record(err: &CliError) -> Value {
    serde_json::json!({
        "kind": err.kind(),
        "exit_code": err.exit_code(),
        "message": err.to_string(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub toolkit_version: String,
    pub wall_clock_seconds: f64,
    pub seeds: Vec<u64>,
    pub diagnostics: Vec<Diagnostic>,
    pub outputs: Vec<String>,
    /// The configuration with every default filled in.
    pub resolved_config: String,
    pub exit_code: i32,
}

/// SHA-256 of the resolved configuration.
pub fn config_hash(resolved: &str) -> String {
    hex::encode(Sha256::digest(resolved.as_bytes()))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_text(dir, name, &text)
}

/// JSON view of a table, used when CSV output is disabled.
pub fn table_json(t: &Table) -> Value {
    let rows: Vec<Value> = t
        .rows
        .iter()
        .map(|r| {
            let obj: Map<String, Value> = t
                .header
                .iter()
                .zip(r)
                .map(|(h, c)| {
                    let v = match c {
                        Cell::F(v) => serde_json::Number::from_f64(*v).map_or(Value::String(format_float(*v)), Value::Number),
                        Cell::U(v) => Value::from(*v),
                        Cell::S(s) => Value::from(s.as_str()),
                        Cell::B(b) => Value::from(*b),
                    };
                    (h.to_string(), v)
                })
                .collect();
            Value::Object(obj)
        })
        .collect();
    Value::Array(rows)
}

/// Render keys as a short `k=v` list for console output.
pub fn brief(summary: &Map<String, Value>) -> String {
    let mut out = String::new();
    for (k, v) in summary {
        if matches!(v, Value::Number(_) | Value::Bool(_) | Value::String(_)) {
            let _ = write!(out, "{k}={v} ");
        }
    }
    out.trim_end().to_string()
}
