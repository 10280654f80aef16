//! Trajectory scoring against hand-labeled ground truth.
//!
//! Ground-truth entries are matched to trajectory points by axial
//! proximity (nearest z within half a slice spacing) and scored with
//! full 3-D Euclidean distances; when the axial coordinates coincide
//! exactly this reduces to the in-plane distance. Results aggregate
//! into a schema-versioned JSON report.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::{csv_io_error, Side};
use crate::trajectory::Trajectory;

/// Version tag for validation report JSON files.
pub const REPORT_SCHEMA: u32 = 1;

/// One hand-labeled electrode centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthEntry {
    pub slice_index: usize,
    pub label: Side,
    pub position: [f64; 3],
}

/// Labeled reference centroids; at most one per (slice, label).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    entries: Vec<GroundTruthEntry>,
}

impl GroundTruth {
    pub fn new(entries: Vec<GroundTruthEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::GroundTruth(format!(
                    "non-finite position for slice {} label {}",
                    e.slice_index, e.label
                )));
            }
            if !seen.insert((e.slice_index, e.label)) {
                return Err(Error::GroundTruth(format!(
                    "duplicate entry for slice {} label {}",
                    e.slice_index, e.label
                )));
            }
        }
        Ok(GroundTruth { entries })
    }

    pub fn entries(&self) -> &[GroundTruthEntry] {
        &self.entries
    }

    pub fn for_label(&self, label: Side) -> impl Iterator<Item = &GroundTruthEntry> {
        self.entries.iter().filter(move |e| e.label == label)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Distance between a matched ground-truth entry and its trajectory point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceDistance {
    pub slice_index: usize,
    pub ed_mm: f64,
}

/// Outcome of matching one trajectory against one label's ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedDistances {
    pub matched: Vec<SliceDistance>,
    /// Slice indices of ground-truth entries with no trajectory point
    /// within the matching window.
    pub missed: Vec<usize>,
    /// Trajectory points no ground-truth entry claimed.
    pub spurious: usize,
}

/// Full 3-D Euclidean distance between two points.
pub fn euclidean_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let dz = b[2] - a[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Match each ground-truth entry of the trajectory's label to the
/// trajectory point with the nearest axial coordinate, accepting
/// matches within half the trajectory's native slice spacing. Ties go
/// to the lower point index. Unmatched entries are missed; trajectory
/// points nothing claimed are spurious.
pub fn euclidean_distances(t: &Trajectory, gt: &GroundTruth) -> MatchedDistances {
    let window = 0.5 * t.native_spacing;
    let pts = t.points();
    let mut claimed = vec![false; pts.len()];
    let mut matched = Vec::new();
    let mut missed = Vec::new();
    for entry in gt.for_label(t.label) {
        let z = entry.position[2];
        // Points are strictly ascending in z; the nearest is adjacent to
        // the partition point.
        let idx = pts.partition_point(|p| p[2] < z);
        let mut best: Option<usize> = None;
        for cand in [idx.wrapping_sub(1), idx] {
            if cand >= pts.len() {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => (pts[cand][2] - z).abs() < (pts[b][2] - z).abs(),
            };
            if better {
                best = Some(cand);
            }
        }
        match best {
            Some(b) if (pts[b][2] - z).abs() <= window => {
                claimed[b] = true;
                matched.push(SliceDistance {
                    slice_index: entry.slice_index,
                    ed_mm: euclidean_distance(pts[b], entry.position),
                });
            }
            _ => missed.push(entry.slice_index),
        }
    }
    let spurious = claimed.iter().filter(|&&c| !c).count();
    MatchedDistances {
        matched,
        missed,
        spurious,
    }
}

/// Mean squared Euclidean distance over matched slices.
pub fn mse(t: &Trajectory, gt: &GroundTruth) -> Result<f64> {
    let d = euclidean_distances(t, gt);
    if d.matched.is_empty() {
        return Err(Error::GroundTruth(format!(
            "no {} ground-truth entry matched a trajectory point",
            t.label
        )));
    }
    let sum: f64 = d.matched.iter().map(|m| m.ed_mm * m.ed_mm).sum();
    Ok(sum / d.matched.len() as f64)
}

/// Per-electrode scoring summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeMetrics {
    pub label: Side,
    pub mean_ed_mm: f64,
    pub max_ed_mm: f64,
    pub mse_mm: f64,
    pub matched_slices: usize,
    pub missed_slices: usize,
    pub spurious_slices: usize,
}

impl ElectrodeMetrics {
    /// Aggregate matching results; errors when nothing matched because
    /// the means are undefined.
    pub fn from_distances(label: Side, d: &MatchedDistances) -> Result<Self> {
        if d.matched.is_empty() {
            return Err(Error::GroundTruth(format!(
                "no matched slices for {label}; metrics are undefined"
            )));
        }
        let n = d.matched.len() as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut max = 0.0f64;
        for m in &d.matched {
            sum += m.ed_mm;
            sum_sq += m.ed_mm * m.ed_mm;
            max = max.max(m.ed_mm);
        }
        Ok(ElectrodeMetrics {
            label,
            mean_ed_mm: sum / n,
            max_ed_mm: max,
            mse_mm: sum_sq / n,
            matched_slices: d.matched.len(),
            missed_slices: d.missed.len(),
            spurious_slices: d.spurious,
        })
    }
}

/// Final machine-readable scoring artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema: u32,
    pub per_electrode: Vec<ElectrodeMetrics>,
    pub k_used: f64,
    pub runtime_seconds: f64,
}

/// Bundle per-electrode metrics into a report.
pub fn make_report(
    per_electrode: Vec<ElectrodeMetrics>,
    k_used: f64,
    runtime_seconds: f64,
) -> ValidationReport {
    ValidationReport {
        schema: REPORT_SCHEMA,
        per_electrode,
        k_used,
        runtime_seconds,
    }
}

pub fn write_report_json(report: &ValidationReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::format(path, format!("serialize: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: &Path) -> Result<ValidationReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: ValidationReport =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if report.schema != REPORT_SCHEMA {
        return Err(Error::format(
            path,
            format!(
                "unsupported report schema {} (expected {REPORT_SCHEMA})",
                report.schema
            ),
        ));
    }
    Ok(report)
}

const GT_HEADER: [&str; 5] = ["slice_index", "label", "x_mm", "y_mm", "z_mm"];

/// Read ground truth CSV with header `slice_index,label,x_mm,y_mm,z_mm`.
/// Malformed or duplicate rows fail with their line number.
pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_io_error(path, e))?;
    {
        let headers = rdr.headers().map_err(|e| csv_io_error(path, e))?;
        if headers.iter().ne(GT_HEADER.iter().copied()) {
            return Err(Error::GroundTruth(format!(
                "{}: expected header {}, got {}",
                path.display(),
                GT_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
    }
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_io_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |what: String| {
            Error::GroundTruth(format!("{}: line {line}: {what}", path.display()))
        };
        if record.len() != 5 {
            return Err(row_err(format!("expected 5 fields, got {}", record.len())));
        }
        let slice_index: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| row_err(format!("bad slice_index '{}'", &record[0])))?;
        let label: Side = record[1]
            .trim()
            .parse()
            .map_err(|_| row_err(format!("bad label '{}'", &record[1])))?;
        let mut position = [0.0f64; 3];
        for (axis, field) in position.iter_mut().zip(2..5) {
            let raw = record[field].trim();
            *axis = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| row_err(format!("bad coordinate '{raw}'")))?;
        }
        if !seen.insert((slice_index, label)) {
            return Err(row_err(format!(
                "duplicate entry for slice {slice_index} label {label}"
            )));
        }
        entries.push(GroundTruthEntry {
            slice_index,
            label,
            position,
        });
    }
    GroundTruth::new(entries)
}

/// Write ground truth in the same CSV format `read_ground_truth` parses.
pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io_error(path, e))?;
    w.write_record(GT_HEADER).map_err(|e| csv_io_error(path, e))?;
    for e in gt.entries() {
        w.write_record([
            e.slice_index.to_string(),
            e.label.to_string(),
            format!("{}", e.position[0]),
            format!("{}", e.position[1]),
            format!("{}", e.position[2]),
        ])
        .map_err(|e| csv_io_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
