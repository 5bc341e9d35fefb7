//! Text loaders for delimiter-separated and sparse `label index:value` files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows of features with their labels as written in the source file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub name: String,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub dim: usize,
}

impl RawDataset {
    pub fn new(name: impl Into<String>, rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::invalid("labels", "one label per row is required"));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Ok(RawDataset {
            name: name.into(),
            rows,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Delimited,
    Sparse,
}

/// How to read a delimited file. `label_column` counts from the end when
/// negative (`-1` is the last column).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub format: Format,
    pub delimiter: char,
    pub label_column: i64,
    pub header: bool,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            format: Format::Delimited,
            delimiter: ',',
            label_column: -1,
            header: false,
        }
    }
}

pub fn load(path: &Path, schema: &Schema, name: &str) -> Result<RawDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match schema.format {
        Format::Delimited => parse_delimited(&text, path, schema, name),
        Format::Sparse => parse_sparse(&text, path, name),
    }
}

pub fn load_delimited(path: &Path, schema: &Schema) -> Result<RawDataset> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_delimited(&text, path, schema, name)
}

fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

pub fn parse_delimited(text: &str, path: &Path, schema: &Schema, name: &str) -> Result<RawDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (i, line) in text.lines().enumerate().skip(usize::from(schema.header)) {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(schema.delimiter).map(str::trim).collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(parse_error(path, lineno, format!("expected {w} fields, found {}", fields.len())));
            }
            _ => {}
        }
        let n = fields.len() as i64;
        let label_at = if schema.label_column < 0 {
            n + schema.label_column
        } else {
            schema.label_column
        };
        if !(0..n).contains(&label_at) {
            return Err(parse_error(path, lineno, format!("label column {} out of range", schema.label_column)));
        }
        let label_at = label_at as usize;
        let mut row = Vec::with_capacity(fields.len() - 1);
        for (j, f) in fields.iter().enumerate() {
            if j == label_at {
                continue;
            }
            let v: f64 = f
                .parse()
                .map_err(|_| parse_error(path, lineno, format!("column {}: `{f}` is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(parse_error(path, lineno, format!("column {}: non-finite value", j + 1)));
            }
            row.push(v);
        }
        rows.push(row);
        labels.push(fields[label_at].to_string());
    }
    if rows.is_empty() {
        return Err(parse_error(path, 0, "no data rows"));
    }
    RawDataset::new(name, rows, labels)
}

/// `label index:value ...` with 1-based indices; absent entries are zero.
pub fn parse_sparse(text: &str, path: &Path, name: &str) -> Result<RawDataset> {
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().unwrap_or_default();
        let mut row = Vec::new();
        let mut last = 0;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_error(path, lineno, format!("`{tok}` is not index:value")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_error(path, lineno, format!("bad index `{idx}`")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_error(path, lineno, format!("bad value `{val}`")))?;
            if idx == 0 || idx <= last {
                return Err(parse_error(path, lineno, "indices must be 1-based and increasing"));
            }
            last = idx;
            dim = dim.max(idx);
            row.push((idx - 1, val));
        }
        entries.push(row);
        labels.push(label.to_string());
    }
    if entries.is_empty() {
        return Err(parse_error(path, 0, "no data rows"));
    }
    let rows = entries
        .into_iter()
        .map(|e| {
            let mut dense = vec![0.0; dim];
            for (j, v) in e {
                dense[j] = v;
            }
            dense
        })
        .collect();
    RawDataset::new(name, rows, labels)
}
