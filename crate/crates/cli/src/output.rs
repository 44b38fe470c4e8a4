//! Tabular command output as CSV with `#` metadata lines, or as one JSON
//! object per record.

use std::io::Write;

use popproc_core::SeriesControl;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }

    /// 17 significant digits, enough to round-trip any double.
    fn to_csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Num(x) => x.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputRecord {
    pub command: String,
    pub params: Vec<(String, Cell)>,
    pub metadata: Vec<(String, Cell)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Labelled summary values after the table, e.g. `truncation_mass`.
    pub footer: Vec<(String, Cell)>,
    /// Structured per-row detail, emitted only in JSON.
    pub details: Option<Value>,
}

impl OutputRecord {
    pub fn new(command: &str, columns: &[&str]) -> Self {
        Self {
            command: command.to_string(),
            params: Vec::new(),
            metadata: vec![("version".into(), Cell::Text(env!("CARGO_PKG_VERSION").into()))],
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            footer: Vec::new(),
            details: None,
        }
    }

    pub fn param(&mut self, name: &str, v: impl Into<Cell>) -> &mut Self {
        self.params.push((name.into(), v.into()));
        self
    }

    pub fn meta(&mut self, name: &str, v: impl Into<Cell>) -> &mut Self {
        self.metadata.push((name.into(), v.into()));
        self
    }

    pub fn tolerances(&mut self, ctl: &SeriesControl) -> &mut Self {
        self.meta("rel_tol", ctl.rel_tol)
            .meta("abs_tol", ctl.abs_tol)
            .meta("max_terms", ctl.max_terms as u64)
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> std::io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => {
                serde_json::to_writer(&mut *out, &self.to_json())?;
                writeln!(out)
            }
        }
    }

    fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let kv = |items: &[(String, Cell)]| {
            items
                .iter()
                .map(|(k, v)| format!("{k}={}", v.to_csv()))
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(out, "# popproc {}", self.command)?;
        writeln!(out, "# params: {}", kv(&self.params))?;
        writeln!(out, "# metadata: {}", kv(&self.metadata))?;
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(&mut *out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_csv))?;
        }
        for (name, v) in &self.footer {
            w.write_record([name.clone(), v.to_csv()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let obj = |items: &[(String, Cell)]| -> Map<String, Value> {
            items.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()
        };
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().cloned().zip(r.iter().map(Cell::to_json)).collect()))
            .collect();
        let mut v = json!({
            "command": self.command,
            "params": obj(&self.params),
            "metadata": obj(&self.metadata),
            "rows": rows,
        });
        if !self.footer.is_empty() {
            v["footer"] = Value::Object(obj(&self.footer));
        }
        if let Some(d) = &self.details {
            v["details"] = d.clone();
        }
        v
    }
}
