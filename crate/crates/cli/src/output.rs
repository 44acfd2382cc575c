//! Table assembly and serialization.
//!
//! Every subcommand produces one [`Table`]: ordered `key = value` metadata
//! plus a rectangular data block. Rendering is fully deterministic — fixed
//! iteration order, fixed float formatting — so identical flags always
//! produce identical bytes.
//!
//! CSV layout: one `# key=value` comment line per metadata entry, a single
//! comma-separated header row, then the data rows. Floats are written in
//! scientific notation with 17 significant digits, which round-trips
//! double precision exactly.
//!
//! JSON layout: one top-level object `{ "meta": {...}, "rows": [...] }`
//! with each row an object keyed by column name.

use serde_json::{Map, Value};

/// One data cell.
#[derive(Clone, Debug)]
pub enum Cell {
    UInt(u64),
    Float(f64),
    Str(String),
    Bool(bool),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Cell {
        Cell::UInt(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Cell {
        Cell::UInt(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Cell {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Cell {
        Cell::Str(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Cell {
        Cell::Str(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Cell {
        Cell::Bool(v)
    }
}

/// Structured output of one subcommand.
#[derive(Clone, Debug, Default)]
pub struct Table {
    meta: Vec<(String, Cell)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Table {
        Table {
            meta: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl Into<Cell>) {
        self.meta.push((key.into(), value.into()));
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.meta {
            out.push_str("# ");
            out.push_str(key);
            out.push('=');
            out.push_str(&csv_cell(value));
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&csv_cell(cell));
            }
            out.push('\n');
        }
        out
    }

    fn render_json(&self) -> String {
        let mut meta = Map::new();
        for (key, value) in &self.meta {
            meta.insert(key.clone(), json_cell(value));
        }
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (name, cell) in self.columns.iter().zip(row) {
                    obj.insert((*name).to_string(), json_cell(cell));
                }
                Value::Object(obj)
            })
            .collect();
        let mut top = Map::new();
        top.insert("meta".to_string(), Value::Object(meta));
        top.insert("rows".to_string(), Value::Array(rows));
        let mut text = serde_json::to_string_pretty(&Value::Object(top))
            .expect("in-memory JSON serialization cannot fail");
        text.push('\n');
        text
    }
}

/// Output serialization format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Scientific notation with 17 significant digits: enough to reconstruct
/// the exact double on parse.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_cell(cell: &Cell) -> String {
    match cell {
        Cell::UInt(v) => v.to_string(),
        Cell::Float(v) => format_float(*v),
        Cell::Str(v) => v.clone(),
        Cell::Bool(v) => v.to_string(),
    }
}

fn json_cell(cell: &Cell) -> Value {
    match cell {
        Cell::UInt(v) => Value::from(*v),
        Cell::Float(v) => serde_json::Number::from_f64(*v)
            .map(Value::Number)
            .unwrap_or_else(|| Value::String(format_float(*v))),
        Cell::Str(v) => Value::String(v.clone()),
        Cell::Bool(v) => Value::Bool(*v),
    }
}
