//! Experiment output: a CSV table and a JSON report.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Assertion { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().context("flushing CSV")
    }
}

/// Result of one experiment.
#[derive(Debug, Clone)]
pub struct Report {
    pub config: ExperimentConfig,
    pub table: Table,
    pub metrics: Value,
    pub assertions: Vec<Assertion>,
    pub wall_clock_s: f64,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    /// JSON with sorted keys.
    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "config": serde_json::to_value(&self.config)?,
            "config_text": self.config.render(),
            "metrics": self.metrics,
            "assertions": self.assertions,
            "passed": self.passed(),
            "wall_clock_s": self.wall_clock_s,
            "version": env!("CARGO_PKG_VERSION"),
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// Write `<dir>/<experiment>.csv` and `<dir>/<experiment>.json`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let name = self.config.experiment.name();
        let csv_path = dir.join(format!("{name}.csv"));
        let json_path = dir.join(format!("{name}.json"));
        fs::write(&csv_path, self.table.to_csv()?).with_context(|| format!("writing {}", csv_path.display()))?;
        fs::write(&json_path, self.to_json()?).with_context(|| format!("writing {}", json_path.display()))?;
        Ok((csv_path, json_path))
    }
}
