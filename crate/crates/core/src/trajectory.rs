//! Electrode trajectories assembled from labeled per-slice centroids.
//!
//! A trajectory is an ordered polyline, one point per axial slice,
//! strictly ascending in z. Assembly drops off-line outliers with a
//! robust two-pass line fit, and the polyline can be resampled to a
//! uniform arc-length spacing by linear interpolation.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::{csv_io_error, CentroidSet, Side};

/// Default resampled trajectory resolution in millimeters.
pub const DEFAULT_OUTPUT_SPACING_MM: f64 = 0.63;

/// Version tag for trajectory JSON files.
pub const TRAJECTORY_SCHEMA: u32 = 1;

/// Residuals below this floor are never outliers; electrodes are not
/// perfectly straight and slice centroids carry half-voxel jitter.
const OUTLIER_FLOOR_MM: f64 = 2.0;

/// A residual this many times the median marks a streak artifact rather
/// than electrode curvature.
const OUTLIER_MEDIAN_FACTOR: f64 = 3.0;

/// Ordered polyline of one electrode's centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: Side,
    points: Vec<[f64; 3]>,
    /// Axial spacing of the volume the centroids came from, mm.
    pub native_spacing: f64,
    /// Threshold multiplier the segmentation ran with.
    pub source_k: f64,
}

impl Trajectory {
    /// Points must be strictly ascending in z and number at least two.
    pub fn new(
        label: Side,
        points: Vec<[f64; 3]>,
        native_spacing: f64,
        source_k: f64,
    ) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TrajectoryNotFound(format!(
                "{label} trajectory has {} point(s); need at least 2",
                points.len()
            )));
        }
        if !(native_spacing.is_finite() && native_spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "native_spacing must be finite and positive, got {native_spacing}"
            )));
        }
        if !source_k.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "source_k must be finite, got {source_k}"
            )));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "trajectory points must be finite".into(),
            ));
        }
        if points.windows(2).any(|w| w[0][2] >= w[1][2]) {
            return Err(Error::InvalidParameter(format!(
                "{label} trajectory points must be strictly ascending in z"
            )));
        }
        Ok(Trajectory {
            label,
            points,
            native_spacing,
            source_k,
        })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Total polyline length in mm; positive because points are distinct.
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    /// Axial span from tip (lowest slice) to entry (highest slice).
    pub fn extent(&self) -> TrajectoryExtent {
        let start_mm = self.points[0][2];
        let end_mm = self.points[self.points.len() - 1][2];
        TrajectoryExtent {
            start_mm,
            end_mm,
            absolute_distance_mm: end_mm - start_mm,
        }
    }
}

/// Axial extent of a trajectory: tip slice, entry slice, and their
/// difference (always positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryExtent {
    pub start_mm: f64,
    pub end_mm: f64,
    pub absolute_distance_mm: f64,
}

/// Total-least-squares line through a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    /// Centroid of the fitted points; a point on the line.
    pub point: [f64; 3],
    /// Unit direction, oriented with a non-negative z component.
    pub direction: [f64; 3],
    /// Root-mean-square perpendicular distance of the fitted points.
    pub rms_residual: f64,
}

impl LineFit {
    /// Perpendicular distance from a point to the fitted line.
    pub fn residual(&self, p: [f64; 3]) -> f64 {
        let d = Vector3::from(self.direction);
        let r = Vector3::from(p) - Vector3::from(self.point);
        (r - d * r.dot(&d)).norm()
    }
}

/// Fit a total-least-squares line: the first principal direction of the
/// centered points.
pub fn fit_line(t: &Trajectory) -> Result<LineFit> {
    fit_line_points(t.points())
}

/// Line fit over a raw point set; errors when all points coincide.
pub fn fit_line_points(points: &[[f64; 3]]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "line fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::InvalidParameter(
            "line fit is undefined: all points coincident".into(),
        ));
    }
    let n = points.len() as f64;
    let mut centroid = Vector3::zeros();
    for p in points {
        centroid += Vector3::from(*p);
    }
    centroid /= n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::from(*p) - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let principal = eig.eigenvalues.imax();
    let mut dir: Vector3<f64> = eig.eigenvectors.column(principal).into();
    dir.normalize_mut();
    // Canonical orientation: ascending z, ties broken by y then x.
    let flip = if dir.z != 0.0 {
        dir.z < 0.0
    } else if dir.y != 0.0 {
        dir.y < 0.0
    } else {
        dir.x < 0.0
    };
    if flip {
        dir = -dir;
    }
    let mut sq = 0.0;
    for p in points {
        let r = Vector3::from(*p) - centroid;
        sq += (r - dir * r.dot(&dir)).norm_squared();
    }
    Ok(LineFit {
        point: centroid.into(),
        direction: dir.into(),
        rms_residual: (sq / n).sqrt(),
    })
}

/// Assemble one electrode's trajectory from labeled centroid sets.
///
/// Centroids with the requested label are ordered by z, then screened
/// with a two-pass robust fit: a line is fitted to all points, points
/// whose perpendicular residual exceeds
/// `max(OUTLIER_FLOOR_MM, OUTLIER_MEDIAN_FACTOR * median residual)` are
/// dropped, and the line is refitted on the survivors. Slices with no
/// centroid are simply absent; nothing is interpolated here.
pub fn build_trajectory(
    sets: &[CentroidSet],
    label: Side,
    native_spacing: f64,
    source_k: f64,
) -> Result<Trajectory> {
    let mut pts: Vec<[f64; 3]> = sets
        .iter()
        .flat_map(|s| s.centroids.iter())
        .filter(|c| c.label == Some(label))
        .map(|c| c.position)
        .collect();
    if pts.len() < 2 {
        return Err(Error::TrajectoryNotFound(format!(
            "found {} slice(s) with a {label} centroid; need at least 2",
            pts.len()
        )));
    }
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));

    let fit = fit_line_points(&pts)?;
    let mut residuals: Vec<f64> = pts.iter().map(|&p| fit.residual(p)).collect();
    let cutoff = OUTLIER_FLOOR_MM.max(OUTLIER_MEDIAN_FACTOR * median(&mut residuals));
    let kept: Vec<[f64; 3]> = pts
        .iter()
        .copied()
        .filter(|&p| fit.residual(p) <= cutoff)
        .collect();
    if kept.len() < 2 {
        return Err(Error::TrajectoryNotFound(format!(
            "outlier rejection left {} {label} centroid(s); need at least 2",
            kept.len()
        )));
    }
    // Refit on survivors so downstream line queries see the clean fit;
    // no further discarding.
    fit_line_points(&kept)?;
    Trajectory::new(label, kept, native_spacing, source_k)
}

/// Resample a trajectory to uniform arc-length spacing by walking the
/// polyline. The first and last points are preserved exactly; every
/// output gap equals `spacing` except the final one, which is at most
/// `spacing`. A spacing at or beyond the total length yields just the
/// two endpoints.
pub fn resample_trajectory(t: &Trajectory, spacing: f64) -> Result<Trajectory> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "resample spacing must be finite and positive, got {spacing}"
        )));
    }
    let pts = t.points();
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0f64);
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + dist(w[0], w[1]));
    }
    let total = *cum.last().unwrap();

    let mut out = Vec::new();
    out.push(pts[0]);
    if spacing < total {
        // An exact multiple would land the last interior sample on the
        // endpoint; detect it so the endpoint is not duplicated.
        let ratio = total / spacing;
        let interior = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
            ratio.round() as usize - 1
        } else {
            ratio.floor() as usize
        };
        let mut seg = 0usize;
        for j in 1..=interior {
            let s = j as f64 * spacing;
            while seg + 2 < cum.len() && cum[seg + 1] <= s {
                seg += 1;
            }
            let frac = ((s - cum[seg]) / (cum[seg + 1] - cum[seg])).clamp(0.0, 1.0);
            out.push(lerp(pts[seg], pts[seg + 1], frac));
        }
    }
    out.push(pts[pts.len() - 1]);
    Trajectory::new(t.label, out, t.native_spacing, t.source_k)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let dz = b[2] - a[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    label: Side,
    native_spacing_mm: f64,
    source_k: f64,
    points: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    schema: u32,
    trajectories: Vec<TrajectoryRecord>,
}

/// Write trajectories as schema-versioned JSON.
pub fn write_trajectory_json(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    let file = TrajectoryFile {
        schema: TRAJECTORY_SCHEMA,
        trajectories: trajectories
            .iter()
            .map(|t| TrajectoryRecord {
                label: t.label,
                native_spacing_mm: t.native_spacing,
                source_k: t.source_k,
                points: t.points.clone(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::format(path, format!("serialize: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read trajectories back, revalidating every invariant.
pub fn read_trajectory_json(path: &Path) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TrajectoryFile =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if file.schema != TRAJECTORY_SCHEMA {
        return Err(Error::format(
            path,
            format!(
                "unsupported trajectory schema {} (expected {TRAJECTORY_SCHEMA})",
                file.schema
            ),
        ));
    }
    file.trajectories
        .into_iter()
        .map(|r| Trajectory::new(r.label, r.points, r.native_spacing_mm, r.source_k))
        .collect()
}

/// Write trajectories as CSV: label, point_index, x_mm, y_mm, z_mm.
pub fn write_trajectory_csv(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io_error(path, e))?;
    w.write_record(["label", "point_index", "x_mm", "y_mm", "z_mm"])
        .map_err(|e| csv_io_error(path, e))?;
    for t in trajectories {
        for (i, p) in t.points().iter().enumerate() {
            w.write_record([
                t.label.to_string(),
                i.to_string(),
                format!("{}", p[0]),
                format!("{}", p[1]),
                format!("{}", p[2]),
            ])
            .map_err(|e| csv_io_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
