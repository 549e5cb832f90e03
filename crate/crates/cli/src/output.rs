//! CSV and JSON rendering. Floats go to CSV with 17 significant digits and
//! to JSON in shortest round-trip form; both parse back to the same bits.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::config::Format;
use crate::Failure;

pub enum Cell {
    Num(Option<f64>),
    Int(usize),
    Flags(Vec<String>),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(Some(x)) if x.is_finite() => format!("{x:.16e}"),
            Cell::Num(Some(x)) => x.to_string(),
            Cell::Num(None) => String::new(),
            Cell::Int(i) => i.to_string(),
            Cell::Flags(f) => f.join(";"),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => x.map_or(Value::Null, Value::from),
            Cell::Int(i) => Value::from(*i),
            Cell::Flags(f) => Value::from(f.clone()),
        }
    }
}

/// Rows under a fixed header, plus run metadata kept only in JSON.
pub struct Table {
    pub meta: Map<String, Value>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { meta: Map::new(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn render(self, format: Format) -> Payload {
        match format {
            Format::Csv => {
                let mut s = self.columns.join(",");
                s.push('\n');
                for row in &self.rows {
                    let line: Vec<String> = row.iter().map(Cell::csv).collect();
                    s.push_str(&line.join(","));
                    s.push('\n');
                }
                Payload::Text(s)
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> =
                            self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                        Value::Object(obj)
                    })
                    .collect();
                let mut doc = self.meta;
                doc.insert("rows".into(), Value::Array(rows));
                Payload::Json(Value::Object(doc))
            }
        }
    }
}

pub enum Payload {
    Text(String),
    Json(Value),
}

pub fn write(payload: &Payload, out: Option<&Path>) -> Result<(), Failure> {
    let text = match payload {
        Payload::Text(s) => s.clone(),
        Payload::Json(v) => {
            let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
            s.push('\n');
            s
        }
    };
    let res = match out {
        Some(path) => fs::write(path, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    res.map_err(|e| Failure::Usage(format!("cannot write output: {e}")))
}
