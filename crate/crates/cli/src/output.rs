//! Tabular result files: comma-separated, header first, fixed column order,
//! floats in shortest round-trip form so the bytes are deterministic.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Int,
    Float,
    Text,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: &'static str,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schema {
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: &[(&'static str, ColumnKind)]) -> Self {
        Schema {
            columns: columns.iter().map(|&(name, kind)| Column { name, kind }).collect(),
        }
    }

    pub fn header(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.name).collect()
    }

    /// Plot-ready `(x, y, y_err)` series.
    pub fn series() -> Self {
        Schema::new(&[("x", ColumnKind::Float), ("y", ColumnKind::Float), ("y_err", ColumnKind::Float)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Value {
    fn kind(&self) -> ColumnKind {
        match self {
            Value::Int(_) => ColumnKind::Int,
            Value::Float(_) => ColumnKind::Float,
            Value::Text(_) => ColumnKind::Text,
            Value::Bool(_) => ColumnKind::Bool,
        }
    }

    fn parse(kind: ColumnKind, field: &str) -> Option<Value> {
        Some(match kind {
            ColumnKind::Int => Value::Int(field.parse().ok()?),
            ColumnKind::Float => Value::Float(field.parse().ok()?),
            ColumnKind::Text => Value::Text(field.to_string()),
            ColumnKind::Bool => Value::Bool(field.parse().ok()?),
        })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            // `{}` prints the shortest string that parses back to the same bits.
            Value::Float(v) => write!(f, "{v}"),
            Value::Text(v) => f.write_str(v),
            Value::Bool(v) => write!(f, "{v}"),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.into())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

pub type Row = Vec<Value>;

fn check_row(schema: &Schema, i: usize, row: &Row) -> Result<(), CliError> {
    if row.len() != schema.columns.len() {
        return Err(CliError::Internal(format!(
            "row {i} has {} fields, schema has {}",
            row.len(),
            schema.columns.len()
        )));
    }
    for (value, column) in row.iter().zip(&schema.columns) {
        if value.kind() != column.kind {
            return Err(CliError::Internal(format!(
                "row {i}, column `{}`: expected {:?}, got {:?}",
                column.name,
                column.kind,
                value.kind()
            )));
        }
    }
    Ok(())
}

/// Render rows as CSV text.
pub fn render_results(rows: &[Row], schema: &Schema) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(schema.header()).map_err(io_error)?;
    for (i, row) in rows.iter().enumerate() {
        check_row(schema, i, row)?;
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(io_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn emit_results(rows: &[Row], schema: &Schema, path: &Path) -> Result<(), CliError> {
    let text = render_results(rows, schema)?;
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Read back a file written by [`emit_results`], checking the header.
pub fn parse_results(text: &str, schema: &Schema) -> Result<Vec<Row>, CliError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(io_error)?.clone();
    if header.iter().ne(schema.header()) {
        return Err(CliError::Io(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(io_error)?;
        let row = record
            .iter()
            .zip(&schema.columns)
            .map(|(field, col)| {
                Value::parse(col.kind, field)
                    .ok_or_else(|| CliError::Io(format!("column `{}`: cannot parse `{field}`", col.name)))
            })
            .collect::<Result<Row, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn io_error(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}
