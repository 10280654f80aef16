//! Run reports: what a subcommand did, what it wrote, and how long each
//! stage took. Timing is quarantined in `timing_seconds`; every other
//! field is a pure function of the inputs, so reports diff cleanly once
//! that one section is ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dbsloc_core::{Error, Result};
use serde::Serialize;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub command: String,
    /// Resolved parameters after config-file merging.
    pub parameters: serde_json::Value,
    /// Files this run wrote, relative to the output directory.
    pub outputs: Vec<String>,
    /// Command-specific results (metric values, plateau bounds, counts).
    pub metrics: serde_json::Value,
    /// Per-stage wall time. The only run-dependent section.
    pub timing_seconds: BTreeMap<String, f64>,
}

/// Measures named stages; `lap` closes the current stage.
pub struct StageClock {
    started: Instant,
    last: Instant,
    stages: BTreeMap<String, f64>,
}

impl StageClock {
    pub fn start() -> Self {
        let now = Instant::now();
        StageClock {
            started: now,
            last: now,
            stages: BTreeMap::new(),
        }
    }

    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        let secs = now.duration_since(self.last).as_secs_f64();
        self.last = now;
        *self.stages.entry(stage.to_string()).or_insert(0.0) += secs;
    }

    pub fn total(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn finish(mut self) -> BTreeMap<String, f64> {
        self.stages.insert("total".to_string(), self.total());
        self.stages
    }
}

/// Serialize the report to `dir/report.json` and echo a one-line summary.
pub fn write(dir: &Path, report: &RunReport) -> Result<PathBuf> {
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::format(&path, format!("serialize: {e}")))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Create the output directory (and parents) up front so every writer
/// can assume it exists.
pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Parameters serialized for the report; panics only on non-string-keyed
/// maps, which argument structs never contain.
pub fn parameters<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("argument structs serialize")
}
