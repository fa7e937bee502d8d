//! Deterministic table and sidecar emission.
//!
//! CSV is the primary artifact: UTF-8, one header row, `.` decimal
//! separator, floats printed with 12 significant digits. The JSON sidecar
//! carries the same rows (numbers rounded to the emitted precision, so the
//! two files agree value-for-value) plus run metadata.

use std::fs;
use std::io;
use std::path::Path;
use std::process::Command;

use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// One table cell: a float, a label, or absent (no closed form, infeasible).
#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Float(f64),
    Text(String),
    Missing,
}

impl From<f64> for CellValue {
    fn from(v: f64) -> Self {
        CellValue::Float(v)
    }
}

impl From<Option<f64>> for CellValue {
    fn from(v: Option<f64>) -> Self {
        v.map_or(CellValue::Missing, CellValue::Float)
    }
}

impl From<&str> for CellValue {
    fn from(v: &str) -> Self {
        CellValue::Text(v.to_string())
    }
}

/// Fixed 12-significant-digit formatting; the same value always prints the
/// same bytes.
pub fn fmt_float(v: f64) -> String {
    debug_assert!(v.is_finite(), "non-finite values must be Missing cells");
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v:.11e}")
}

/// The value a reader of the CSV will parse back; JSON rows carry exactly
/// this so the two emitters agree.
pub fn round_to_emitted(v: f64) -> f64 {
    fmt_float(v).parse().expect("formatter output parses")
}

/// A column-ordered result table.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<CellValue>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<CellValue>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row
                .iter()
                .map(|cell| match cell {
                    CellValue::Float(v) => fmt_float(*v),
                    CellValue::Text(t) => t.clone(),
                    CellValue::Missing => String::new(),
                })
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json_rows(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut object = Map::new();
                for (name, cell) in self.columns.iter().zip(row) {
                    let value = match cell {
                        CellValue::Float(v) => json!(round_to_emitted(*v)),
                        CellValue::Text(t) => json!(t),
                        CellValue::Missing => Value::Null,
                    };
                    object.insert(name.clone(), value);
                }
                Value::Object(object)
            })
            .collect();
        Value::Array(rows)
    }
}

/// `git describe` of the working tree, for provenance; absent outside a
/// repository.
pub fn git_describe() -> Option<String> {
    let output = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    if !output.status.success() {
        return None;
    }
    let text = String::from_utf8(output.stdout).ok()?;
    let trimmed = text.trim();
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

/// Common sidecar envelope around command-specific payload fields.
pub fn sidecar(
    command: &str,
    config: &ExperimentConfig,
    seed_used: u64,
    extra: Vec<(&str, Value)>,
) -> Value {
    let mut object = Map::new();
    object.insert("schema_version".into(), json!(SCHEMA_VERSION));
    object.insert("command".into(), json!(command));
    object.insert("seed_used".into(), json!(seed_used));
    object.insert(
        "git_describe".into(),
        git_describe().map_or(Value::Null, Value::String),
    );
    object.insert(
        "config".into(),
        serde_json::to_value(config).expect("config serializes"),
    );
    for (key, value) in extra {
        object.insert(key.into(), value);
    }
    Value::Object(object)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value).expect("JSON serializes");
    text.push('\n');
    fs::write(dir.join(name), text)
}
