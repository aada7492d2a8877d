//! Result tables written as CSV or JSON.
//!
//! Floats are printed with 17 significant digits in scientific notation,
//! which round-trips every `f64` and does not depend on locale.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{invalid, Result};

/// Version string embedded in every output row.
pub const VERSION: &str = concat!("replica-sync-v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(invalid(format!("unknown format {other:?} (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Bool(bool),
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
        Cell::Text(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(v) => json!(format_float(*v)),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
        }
    }
}

/// Rows with a fixed header. `seed`, `mc_samples` and `version` columns are
/// appended to every row when written.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub seed: u64,
    pub mc_samples: usize,
}

impl Table {
    pub fn new(columns: &[&str], seed: u64, mc_samples: usize) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), seed, mc_samples }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    fn footer(&self) -> [Cell; 3] {
        [Cell::Text(self.seed.to_string()), Cell::Int(self.mc_samples as i64), Cell::Text(VERSION.into())]
    }

    /// CSV preceded by one `# config=<json>` comment line holding the resolved config.
    pub fn write_csv<W: Write>(&self, mut out: W, command: &str, config: &impl Serialize) -> Result<()> {
        let cfg = serde_json::to_string(&json!({ "command": command, "config": config })).map_err(|e| invalid(e.to_string()))?;
        writeln!(out, "# config={cfg}")?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let header = self.columns.iter().map(String::as_str).chain(["seed", "mc_samples", "version"]);
        w.write_record(header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().chain(self.footer().iter()).map(Cell::text)).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON document `{version, command, config, rows}` with the resolved config embedded.
    pub fn write_json<W: Write>(&self, mut out: W, command: &str, config: &impl Serialize) -> Result<()> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                for (c, v) in self.columns.iter().zip(r) {
                    m.insert(c.clone(), v.json());
                }
                m.insert("seed".into(), json!(self.seed));
                m.insert("mc_samples".into(), json!(self.mc_samples));
                m.insert("version".into(), json!(VERSION));
                Value::Object(m)
            })
            .collect();
        let doc = json!({
            "version": VERSION,
            "command": command,
            "config": serde_json::to_value(config).map_err(|e| invalid(e.to_string()))?,
            "rows": rows,
        });
        serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| invalid(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn write<W: Write>(&self, out: W, format: Format, command: &str, config: &impl Serialize) -> Result<()> {
        match format {
            Format::Csv => self.write_csv(out, command, config),
            Format::Json => self.write_json(out, command, config),
        }
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => invalid(format!("csv: {other:?}")),
    }
}
