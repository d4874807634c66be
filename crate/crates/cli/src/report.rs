//! Run reports: a deterministic JSON payload (config echo, numeric tables,
//! verdicts) plus wall-clock metadata kept outside the payload so identical
//! configs produce byte-identical payloads.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::RunError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub payload: Payload,
    pub meta: Meta,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Payload {
    pub schema_version: u32,
    pub software: Software,
    pub experiment: String,
    pub config: RunConfig,
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

impl Software {
    pub fn current() -> Self {
        Self {
            name: "bergmanlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Numeric table; every cell is traceable to `operation`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub operation: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub operation: String,
    pub value: f64,
    pub threshold: f64,
    /// How `value` was compared against `threshold`.
    pub comparison: String,
    pub pass: bool,
}

impl Verdict {
    pub fn less_than(name: &str, operation: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            operation: operation.into(),
            value,
            threshold,
            comparison: "value < threshold".into(),
            pass: value < threshold,
        }
    }

    pub fn at_most(name: &str, operation: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            operation: operation.into(),
            value,
            threshold,
            comparison: "value <= threshold".into(),
            pass: value <= threshold,
        }
    }

    pub fn at_least(name: &str, operation: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            operation: operation.into(),
            value,
            threshold,
            comparison: "value >= threshold".into(),
            pass: value >= threshold,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Meta {
    pub timestamp_unix_ms: u64,
    pub wall_ms: f64,
}

fn fmt_cell(x: f64) -> String {
    // 17 significant digits, scientific notation, '.' decimal separator
    format!("{x:.16e}")
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl RunReport {
    /// Deterministic bytes of the payload (excludes timings/timestamps).
    pub fn payload_bytes(&self) -> Result<Vec<u8>, RunError> {
        serde_json::to_vec_pretty(&self.payload)
            .map_err(|e| RunError::Report(format!("payload serialization: {e}")))
    }

    pub fn all_pass(&self) -> bool {
        self.payload.verdicts.iter().all(|v| v.pass)
    }

    /// Writes `report.json` plus one CSV per table into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<(), RunError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| RunError::Report(format!("create {}: {e}", dir.display())))?;
        let json = serde_json::to_vec_pretty(self)
            .map_err(|e| RunError::Report(format!("report serialization: {e}")))?;
        std::fs::write(dir.join("report.json"), json)
            .map_err(|e| RunError::Report(format!("write report.json: {e}")))?;
        for table in &self.payload.tables {
            let mut out = String::new();
            out.push_str(&table.columns.join(","));
            out.push('\n');
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|&x| fmt_cell(x)).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            let name = format!("{}_{}.csv", sanitize(&self.payload.experiment), sanitize(&table.name));
            std::fs::write(dir.join(name), out)
                .map_err(|e| RunError::Report(format!("write table csv: {e}")))?;
        }
        Ok(())
    }
}
