//! Results tables, plot data and the run summary.
//!
//! Every CSV starts with a `#` metadata block:
//!
//! ```text
//! # schema_version: 1
//! # artifact_version: 0.1.0
//! # command: learn
//! # config_hash: sha256:<64 hex digits>
//! ```
//!
//! followed by an ordinary header row. Floats are written with Rust's
//! shortest round-trip `Display` form. Columns whose name starts with
//! `wall_` hold timings and are the only ones allowed to differ between
//! reruns.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use massart_core::stats::median;
use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Prefix of columns excluded from reproducibility comparisons.
pub const WALL_PREFIX: &str = "wall_";

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub cells: Vec<String>,
    pub pass: bool,
    pub aborted: bool,
}

/// A table whose first two columns are `trial` and `config_id` and whose
/// last three are `pass`, `status` and `wall_time_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    columns: Vec<&'static str>,
    rows: Vec<Row>,
}

impl ResultsTable {
    /// `middle` lists the command-specific columns.
    pub fn new(middle: &[&'static str]) -> Self {
        let mut columns = vec!["trial", "config_id"];
        columns.extend_from_slice(middle);
        columns.extend_from_slice(&["pass", "status", "wall_time_s"]);
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[&'static str] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Appends a completed row; `values` fills the command-specific columns.
    pub fn push(&mut self, trial: u64, config_id: &str, values: Vec<String>, pass: bool, wall: f64) {
        assert_eq!(values.len() + 5, self.columns.len(), "row width does not match the table");
        let mut cells = Vec::with_capacity(self.columns.len());
        cells.push(trial.to_string());
        cells.push(config_id.to_string());
        cells.extend(values);
        cells.push(pass.to_string());
        cells.push("ok".to_string());
        cells.push(fmt_f64(wall));
        self.rows.push(Row {
            cells,
            pass,
            aborted: false,
        });
    }

    /// Records a trial that stopped with an error.
    pub fn push_aborted(&mut self, trial: u64, config_id: &str, error: &str, wall: f64) {
        let mut cells = vec![String::new(); self.columns.len()];
        cells[0] = trial.to_string();
        cells[1] = config_id.to_string();
        let n = cells.len();
        cells[n - 3] = "false".to_string();
        cells[n - 2] = format!("error: {}", error.replace(['\n', '\r'], " "));
        cells[n - 1] = fmt_f64(wall);
        self.rows.push(Row {
            cells,
            pass: false,
            aborted: true,
        });
    }

    pub fn passes(&self) -> u64 {
        self.rows.iter().filter(|r| r.pass).count() as u64
    }

    pub fn aborted(&self) -> u64 {
        self.rows.iter().filter(|r| r.aborted).count() as u64
    }

    /// Numeric values of a column, skipping blanks and non-numbers.
    pub fn numeric_column(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.columns.iter().position(|c| *c == name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter_map(|r| r.cells[i].parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .collect()
    }

    pub fn write_csv(&self, path: &Path, meta: &Metadata) -> Result<()> {
        write_csv(path, meta, &self.columns, self.rows.iter().map(|r| r.cells.as_slice()))
    }
}

/// Provenance written at the top of every CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub command: String,
    pub config_hash: String,
}

fn write_csv<'a, I>(path: &Path, meta: &Metadata, columns: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut buf = Vec::new();
    writeln!(buf, "# schema_version: {SCHEMA_VERSION}").expect("write to vec");
    writeln!(buf, "# artifact_version: {ARTIFACT_VERSION}").expect("write to vec");
    writeln!(buf, "# command: {}", meta.command).expect("write to vec");
    writeln!(buf, "# config_hash: sha256:{}", meta.config_hash).expect("write to vec");
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(columns)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| HarnessError::io(path, e))
}

/// `x,y` points of one or more named curves.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub name: &'static str,
    pub x_label: &'static str,
    pub y_label: &'static str,
    /// `(curve, x, y)`.
    pub points: Vec<(String, f64, f64)>,
}

impl PlotData {
    pub fn new(name: &'static str, x_label: &'static str, y_label: &'static str) -> Self {
        Self {
            name,
            x_label,
            y_label,
            points: Vec::new(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("plot_{}.csv", self.name)
    }

    pub fn write_csv(&self, dir: &Path, meta: &Metadata) -> Result<PathBuf> {
        let path = dir.join(self.file_name());
        let rows: Vec<Vec<String>> = self
            .points
            .iter()
            .map(|(c, x, y)| vec![c.clone(), fmt_f64(*x), fmt_f64(*y)])
            .collect();
        write_csv(&path, meta, &["curve", self.x_label, self.y_label], rows.iter().map(Vec::as_slice))?;
        Ok(path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub column: String,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub artifact_version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub rows: u64,
    pub passes: u64,
    pub failures: u64,
    pub aborted: u64,
    pub min_passes: u64,
    pub verdict: &'static str,
    pub columns: Vec<ColumnSummary>,
    /// Command-specific figures such as the largest gradient error.
    pub extra: serde_json::Map<String, serde_json::Value>,
    pub wall_time_s: f64,
}

impl Summary {
    pub fn build(
        meta: &Metadata,
        table: &ResultsTable,
        summarised: &[&str],
        min_passes: Option<u64>,
        extra: serde_json::Map<String, serde_json::Value>,
        wall_time_s: f64,
    ) -> Self {
        let rows = table.rows().len() as u64;
        let passes = table.passes();
        let min_passes = min_passes.unwrap_or(rows);
        let columns = summarised
            .iter()
            .filter_map(|c| {
                let v = table.numeric_column(c);
                let med = median(&v)?;
                Some(ColumnSummary {
                    column: c.to_string(),
                    median: med,
                    min: v.iter().copied().fold(f64::INFINITY, f64::min),
                    max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                })
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            artifact_version: ARTIFACT_VERSION,
            command: meta.command.clone(),
            config_hash: meta.config_hash.clone(),
            rows,
            passes,
            failures: rows - passes,
            aborted: table.aborted(),
            min_passes,
            verdict: if passes >= min_passes && rows > 0 { "pass" } else { "fail" },
            columns,
            extra,
            wall_time_s,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(SUMMARY_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }
}

/// Reads a CSV written by this module and drops the metadata block and every
/// `wall_` column, for reproducibility comparisons.
pub fn comparable_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(body.as_bytes());
    let mut out = Vec::new();
    let mut keep: Vec<bool> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if i == 0 {
            keep = rec.iter().map(|c| !c.starts_with(WALL_PREFIX)).collect();
        }
        out.push(
            rec.iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(c, _)| c.to_string())
                .collect(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Metadata {
        Metadata {
            command: "learn".into(),
            config_hash: "ab".repeat(32),
        }
    }

    #[test]
    fn aborted_rows_keep_the_table_rectangular() {
        let mut t = ResultsTable::new(&["x", "y"]);
        t.push(0, "id", vec!["1".into(), fmt_f64(0.5)], true, 0.25);
        t.push_aborted(1, "id", "bad\nthing", 0.5);
        assert_eq!(t.columns().len(), 7);
        assert!(t.rows().iter().all(|r| r.cells.len() == 7));
        assert_eq!(t.rows()[1].cells[5], "error: bad thing");
        assert_eq!((t.passes(), t.aborted()), (1, 1));
        assert_eq!(t.numeric_column("y"), vec![0.5]);
    }

    #[test]
    fn csv_round_trip_drops_metadata_and_wall_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = ResultsTable::new(&["value", "wall_rate"]);
        t.push(0, "id", vec![fmt_f64(0.1), fmt_f64(123.0)], true, 9.0);
        let p = dir.path().join("r.csv");
        t.write_csv(&p, &meta()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# schema_version: 1\n# artifact_version: "));
        assert!(text.contains(&format!("# config_hash: sha256:{}\n", "ab".repeat(32))));
        let rows = comparable_csv(&p).unwrap();
        assert_eq!(rows[0], vec!["trial", "config_id", "value", "pass", "status"]);
        assert_eq!(rows[1], vec!["0", "id", "0.1", "true", "ok"]);
    }

    #[test]
    fn summary_verdict_follows_min_passes() {
        let mut t = ResultsTable::new(&["v"]);
        for i in 0..10 {
            t.push(i, "id", vec![fmt_f64(i as f64)], i != 3, 0.0);
        }
        let s = Summary::build(&meta(), &t, &["v"], Some(9), serde_json::Map::new(), 0.0);
        assert_eq!((s.passes, s.failures, s.verdict), (9, 1, "pass"));
        assert_eq!(s.columns[0].median, 4.5);
        let s = Summary::build(&meta(), &t, &["v"], None, serde_json::Map::new(), 0.0);
        assert!(!s.passed());
    }
}
