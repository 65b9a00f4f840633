//! Result tables and their CSV and JSON renderings.

use serde_json::{Map, Value};
use tsv_core::hilbert::C64;

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    /// Two CSV columns `<name>_re, <name>_im`; a `[re, im]` pair in JSON.
    Complex(C64),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<C64> for Cell {
    fn from(v: C64) -> Self {
        Cell::Complex(v)
    }
}

/// Seventeen significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn float_value(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

impl Cell {
    fn csv_fields(&self) -> Vec<String> {
        match self {
            Cell::Float(v) => vec![format_float(*v)],
            Cell::Int(v) => vec![v.to_string()],
            Cell::Bool(v) => vec![v.to_string()],
            Cell::Text(s) => vec![s.clone()],
            Cell::Complex(z) => vec![format_float(z.re), format_float(z.im)],
            Cell::Empty => vec![String::new()],
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) => float_value(*v),
            Cell::Int(v) => Value::from(*v),
            Cell::Bool(v) => Value::Bool(*v),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Complex(z) => Value::Array(vec![float_value(z.re), float_value(z.im)]),
            Cell::Empty => Value::Null,
        }
    }
}

/// Named columns and rows. A column is complex when its first non-empty cell is.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    fn is_complex(&self, col: usize) -> bool {
        self.rows.iter().map(|r| &r[col]).find(|c| **c != Cell::Empty).is_some_and(|c| matches!(c, Cell::Complex(_)))
    }

    fn csv_header(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, name) in self.columns.iter().enumerate() {
            if self.is_complex(k) {
                out.push(format!("{name}_re"));
                out.push(format!("{name}_im"));
            } else {
                out.push(name.clone());
            }
        }
        out
    }

    fn csv_row(&self, row: &[Cell]) -> Vec<String> {
        let mut out = Vec::new();
        for (k, cell) in row.iter().enumerate() {
            match cell {
                Cell::Empty if self.is_complex(k) => out.extend([String::new(), String::new()]),
                _ => out.extend(cell.csv_fields()),
            }
        }
        out
    }

    pub fn json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| Value::Object(self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect::<Map<_, _>>()))
                .collect(),
        )
    }
}

/// What a scenario produces: its table plus scalar diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub table: Table,
    pub diagnostics: Vec<(String, Cell)>,
}

impl Report {
    pub fn diagnostic(&mut self, key: &str, value: impl Into<Cell>) {
        self.diagnostics.push((key.to_owned(), value.into()));
    }

    fn diagnostics_json(&self, version: &str) -> Value {
        let mut map = Map::new();
        map.insert("version".into(), Value::String(version.into()));
        for (k, v) in &self.diagnostics {
            map.insert(k.clone(), v.json());
        }
        Value::Object(map)
    }

    /// `#` metadata lines, then an RFC 4180 table; CRLF line ends throughout.
    pub fn to_csv(&self, version: &str, config: &Value) -> Result<String> {
        let mut out = format!("# tsv-lab {version}\r\n# config: {config}\r\n");
        for (k, v) in &self.diagnostics {
            let text = match v {
                Cell::Complex(z) => format!("[{}, {}]", format_float(z.re), format_float(z.im)),
                other => other.csv_fields().join(""),
            };
            out.push_str(&format!("# {k}: {text}\r\n"));
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        let err = |e: csv::Error| LabError::Output(e.to_string());
        w.write_record(self.table.csv_header()).map_err(err)?;
        for row in &self.table.rows {
            w.write_record(self.table.csv_row(row)).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Output(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| LabError::Output(e.to_string()))?);
        Ok(out)
    }

    /// A single object `{config, results, diagnostics}`.
    pub fn to_json(&self, version: &str, config: &Value) -> Result<String> {
        let mut map = Map::new();
        map.insert("config".into(), config.clone());
        map.insert("results".into(), self.table.json());
        map.insert("diagnostics".into(), self.diagnostics_json(version));
        let mut text = serde_json::to_string_pretty(&Value::Object(map)).map_err(|e| LabError::Output(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }
}
