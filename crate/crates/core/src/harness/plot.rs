use std::path::{Path, PathBuf};

use super::report::{read_table, Table};
use crate::{Error, Result};

/// Columns that identify a run rather than measure it.
const ID_COLUMNS: [&str; 4] = ["seed", "mode", "value", "parameter"];
const STEP_COLUMNS: [&str; 2] = ["step", "iteration"];

/// Merges curve CSVs into long format `(run_id, series, step, value)`.
///
/// The run id is the file stem. Every numeric column other than the step
/// column and run identifiers becomes a series unless `series` names the
/// columns to keep; a named series may be absent from some inputs but must
/// appear in at least one. Empty cells are skipped.
pub fn merge_curves(inputs: &[PathBuf], series: &[String]) -> Result<Table> {
    let mut out = Table::new(["run_id", "series", "step", "value"]);
    let mut seen = vec![false; series.len()];
    for path in inputs {
        let file = path.display().to_string();
        let t = read_table(path)?;
        let step = STEP_COLUMNS
            .iter()
            .find_map(|c| t.column(c))
            .ok_or_else(|| Error::Schema {
                file: file.clone(),
                msg: "missing column `step` (or `iteration`)".into(),
            })?;
        let run_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.clone());
        let cols: Vec<usize> = if series.is_empty() {
            (0..t.header.len())
                .filter(|&c| c != step && !ID_COLUMNS.contains(&t.header[c].as_str()))
                .filter(|&c| t.rows.iter().all(|r| r[c].is_empty() || r[c].parse::<f64>().is_ok()))
                .collect()
        } else {
            series
                .iter()
                .enumerate()
                .filter_map(|(i, s)| {
                    let c = t.column(s)?;
                    seen[i] = true;
                    Some(c)
                })
                .collect()
        };
        for (n, r) in t.rows.iter().enumerate() {
            if r[step].parse::<f64>().is_err() {
                return Err(Error::Schema {
                    file: file.clone(),
                    msg: format!("row {}: step `{}` is not a number", n + 1, r[step]),
                });
            }
            for &c in &cols {
                if !r[c].is_empty() {
                    out.push(vec![run_id.clone(), t.header[c].clone(), r[step].clone(), r[c].clone()]);
                }
            }
        }
    }
    if let Some(i) = seen.iter().position(|&f| !f) {
        return Err(Error::Schema {
            file: inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "),
            msg: format!("no input has column `{}`", series[i]),
        });
    }
    Ok(out)
}

/// Writes the merged long-format table to `out` as plain CSV.
pub fn emit_plot_data(inputs: &[PathBuf], out: &Path, series: &[String]) -> Result<usize> {
    let t = merge_curves(inputs, series)?;
    let mut w = csv::Writer::from_path(out).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_record(&t.header).map_err(|e| Error::invalid(e.to_string()))?;
    for r in &t.rows {
        w.write_record(r).map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush()?;
    Ok(t.rows.len())
}
