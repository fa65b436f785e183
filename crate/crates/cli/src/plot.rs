//! Whitespace-separated tables for gnuplot, built from a finished run directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// A CSV written by this crate: stamp and comment lines skipped, columns by name.
struct Table {
    columns: HashMap<String, usize>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Option<Table>, CliError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(CliError::io(path, e)),
        };
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
        let Some(header) = lines.next() else {
            return Ok(None);
        };
        let columns = header.split(',').enumerate().map(|(i, c)| (c.to_string(), i)).collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Ok(Some(Table { columns, rows }))
    }

    fn get<'a>(&self, row: &'a [String], col: &str) -> Result<&'a str, CliError> {
        let i = *self
            .columns
            .get(col)
            .ok_or_else(|| CliError::RunDir(format!("missing column {col}")))?;
        row.get(i)
            .map(String::as_str)
            .ok_or_else(|| CliError::RunDir(format!("short row for column {col}")))
    }

    fn num(&self, row: &[String], col: &str) -> Result<f64, CliError> {
        let v = self.get(row, col)?;
        v.parse()
            .map_err(|_| CliError::RunDir(format!("column {col}: {v} is not a number")))
    }
}

fn write(path: PathBuf, header: &str, rows: &[String]) -> Result<PathBuf, CliError> {
    let mut text = format!("# {header}\n");
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Write `plot/mismatch.dat`, `plot/arms_loglog.dat` and `plot/histogram.dat`
/// under `run_dir`. Missing inputs give header-only tables.
pub fn emit_plot_data(run_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let out = run_dir.join("plot");
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut files = Vec::new();

    let mut mismatch = Vec::new();
    if let Some(t) = Table::read(&run_dir.join("cells.csv"))? {
        for r in &t.rows {
            let key = (t.num(r, "n")? as i64, t.num(r, "epsilon")?, t.get(r, "mode")?.to_string());
            let line = format!("{} {} {} {} {}", key.0, key.1, key.2, t.get(r, "estimate")?, t.get(r, "stderr")?);
            mismatch.push((key, line));
        }
    }
    mismatch.sort_by(|a, b| {
        (a.0 .0, &a.0 .2)
            .cmp(&(b.0 .0, &b.0 .2))
            .then(a.0 .1.total_cmp(&b.0 .1))
    });
    let rows: Vec<String> = mismatch.into_iter().map(|r| r.1).collect();
    files.push(write(out.join("mismatch.dat"), "n epsilon mode estimate stderr", &rows)?);

    let mut arms = Vec::new();
    if let Some(t) = Table::read(&run_dir.join("arms.csv"))? {
        for r in &t.rows {
            let (s, n, est, se) = (t.num(r, "s")?, t.num(r, "n")?, t.num(r, "estimate")?, t.num(r, "stderr")?);
            if est > 0.0 {
                arms.push((s, format!("{} {} {}", (s / n).ln(), est.ln(), se / est)));
            }
        }
    }
    arms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows: Vec<String> = arms.into_iter().map(|r| r.1).collect();
    files.push(write(out.join("arms_loglog.dat"), "log_s_over_n log_estimate stderr_log", &rows)?);

    let mut hist = Vec::new();
    if let Some(t) = Table::read(&run_dir.join("histogram.csv"))? {
        for r in &t.rows {
            hist.push(format!("{} {} {} {}", t.get(r, "n")?, t.get(r, "mode")?, t.get(r, "k")?, t.get(r, "count")?));
        }
    }
    files.push(write(out.join("histogram.dat"), "n mode k count", &hist)?);
    Ok(files)
}
