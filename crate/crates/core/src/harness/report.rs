//! CSV reports with a commented reproducibility header.
//!
//! ```text
//! # generated_at=1767225600
//! # seed=0
//! # tppo.beta=0.05
//! step,train_loss,...
//! ```
//!
//! The timestamp is the only line that varies between identical runs.

use std::path::Path;

use crate::{Error, Result};

pub const TIMESTAMP_KEY: &str = "generated_at";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of a column parsed as numbers; empty cells become `None`.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let c = self.column(name)?;
        Some(self.rows.iter().map(|r| r[c].parse().ok()).collect())
    }
}

/// Formats an optional number; `None` becomes an empty cell.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Report text: timestamp line, `meta` lines, then the CSV body.
pub fn render_report(table: &Table, meta: &[(String, String)]) -> Result<String> {
    let mut out = format!("# {TIMESTAMP_KEY}={}\n", unix_time());
    for (k, v) in meta {
        out.push_str(&format!("# {k}={}\n", v.replace('\n', " ")));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header).map_err(csv_err)?;
    for r in &table.rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    out.push_str(&String::from_utf8(body).expect("utf-8 cells"));
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

pub fn write_report(path: &Path, table: &Table, meta: &[(String, String)]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render_report(table, meta)?)?;
    Ok(())
}

/// Report text without its timestamp line.
pub fn strip_timestamp(text: &str) -> String {
    let prefix = format!("# {TIMESTAMP_KEY}=");
    text.lines()
        .filter(|l| !l.starts_with(&prefix))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Parses a report (or any CSV), skipping `#` lines.
pub fn read_table(path: &Path) -> Result<Table> {
    let file = path.display().to_string();
    let schema = |msg: String| Error::Schema {
        file: file.clone(),
        msg,
    };
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| schema(e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| schema(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(schema("no header row".into()));
    }
    let mut table = Table::new(header);
    for rec in r.records() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        table.rows.push(rec.iter().map(String::from).collect());
    }
    Ok(table)
}
