use lfpp_core::io::fmt_num;
use serde_json::{Map, Value};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Failure, Format};

/// Numeric rows with a header; integers and floats alike go through fmt_num.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|&x| fmt_num(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| Value::Object(self.header.iter().zip(r).map(|(h, &x)| (h.to_string(), num(x))).collect::<Map<_, _>>()))
                .collect(),
        )
    }
}

/// A float rounded to 12 significant digits; non-finite values become null.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let r: f64 = fmt_num(x).parse().unwrap_or(x);
    if r.fract() == 0.0 && r.abs() < 9e15 {
        Value::from(r as i64)
    } else {
        Value::from(r)
    }
}

/// Round every float inside a JSON document.
pub fn round(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => num(n.as_f64().unwrap()),
        Value::Array(a) => Value::Array(a.into_iter().map(round).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round(v))).collect()),
        other => other,
    }
}

/// What a command produced.
pub struct Output {
    pub stem: &'static str,
    pub table: Option<Table>,
    pub json: Option<Value>,
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize") + "\n"
}

impl Output {
    /// Write `<stem>.csv` / `<stem>.json` into `dir`, or print the requested
    /// format to stdout.
    pub fn emit(&self, dir: Option<&Path>, format: Format) -> Result<(), Failure> {
        let io = |e: std::io::Error| Failure::Resource(e.to_string());
        match dir {
            Some(d) => {
                fs::create_dir_all(d).map_err(io)?;
                if let Some(t) = &self.table {
                    fs::write(d.join(format!("{}.csv", self.stem)), t.to_csv()).map_err(io)?;
                }
                if let Some(j) = &self.json {
                    fs::write(d.join(format!("{}.json", self.stem)), pretty(j)).map_err(io)?;
                }
                Ok(())
            }
            None => {
                let text = match (format, &self.table, &self.json) {
                    (Format::Csv, Some(t), _) => t.to_csv(),
                    (Format::Json, _, Some(j)) => pretty(j),
                    (Format::Json, Some(t), None) => pretty(&t.to_json()),
                    (_, None, Some(j)) => pretty(j),
                    (_, None, None) => String::new(),
                };
                std::io::stdout().lock().write_all(text.as_bytes()).map_err(io)
            }
        }
    }
}
