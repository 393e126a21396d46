//! Minimal deterministic CSV writer: header row, LF endings, shortest
//! round-trip float formatting.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Str(String),
    Int(i64),
    Float(f64),
    Empty,
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Str(s.to_string())
    }
}

impl From<String> for Field {
    fn from(s: String) -> Self {
        Field::Str(s)
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Float(x)
    }
}

impl From<usize> for Field {
    fn from(x: usize) -> Self {
        Field::Int(x as i64)
    }
}

impl From<Option<f64>> for Field {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Field::Empty, Field::Float)
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Str(s) => quote(s),
            Field::Int(i) => i.to_string(),
            // `Display` for f64 is the shortest string that parses back exactly.
            Field::Float(x) => x.to_string(),
            Field::Empty => String::new(),
        }
    }
}

pub fn to_csv_string(header: &[&str], rows: &[Vec<Field>]) -> Result<String> {
    let mut out = header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Shape {
                what: if i == 0 { "csv row" } else { "csv row (later)" },
                expected: header.len(),
                got: row.len(),
            });
        }
        out.push_str(&row.iter().map(Field::render).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(path: &Path, header: &[&str], rows: &[Vec<Field>]) -> Result<()> {
    let text = to_csv_string(header, rows)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Splits one CSV line written by [`emit_csv`] (quoted fields supported).
pub fn split_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, in_quotes) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => in_quotes = !in_quotes,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}
