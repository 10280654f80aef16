//! Sweep of the threshold multiplier k against ground truth. Each grid point
//! runs the full segmentation and trajectory stages, scores mean per-slice
//! Euclidean distance, and the sweep reports the widest contiguous band of k
//! values that keeps every case under the millimetre budget.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::MaskedVolume;
use crate::error::{Error, Result};
use crate::segmentation::{segment_volume, AreaFilters, Side};
use crate::trajectory::build_trajectory;
use crate::validation::{euclidean_distances, GroundTruth};

/// Operating point used when no calibration data exists: midpoint of the
/// plateau measured on default phantoms.
pub const DEFAULT_K: f64 = 7.885;
/// Default sweep bounds, from near-mean thresholds up to just below the point
/// where bright metal itself is cut off.
pub const DEFAULT_K_RANGE: (f64, f64) = (0.6, 9.5);
pub const DEFAULT_K_STEP: f64 = 0.01;
/// A grid point joins the plateau only while every case scores below this.
pub const PLATEAU_ED_LIMIT_MM: f64 = 1.0;

/// Score for one k: mean per-slice Euclidean distance over matched ground
/// truth, maximised over cases. Infinite when any case produced no usable
/// trajectory at this k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSweepPoint {
    pub k: f64,
    pub mean_ed_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub points: Vec<KSweepPoint>,
    /// Closed [lo, hi] over the longest contiguous run of qualifying grid
    /// points; first such run wins ties. None when no point qualifies.
    pub plateau: Option<(f64, f64)>,
}

pub fn calibrate_k(
    masked: &MaskedVolume,
    gt: &GroundTruth,
    k_range: (f64, f64),
    step: f64,
) -> Result<Calibration> {
    calibrate_k_multi(&[(masked, gt)], k_range, step)
}

/// Multi-case sweep: one shared k grid, each point scored by its worst case.
pub fn calibrate_k_multi(
    cases: &[(&MaskedVolume, &GroundTruth)],
    k_range: (f64, f64),
    step: f64,
) -> Result<Calibration> {
    if cases.is_empty() {
        return Err(Error::InvalidParameter(
            "calibration needs at least one case".into(),
        ));
    }
    for (_, gt) in cases {
        if gt.is_empty() {
            return Err(Error::GroundTruth(
                "calibration requires nonempty ground truth".into(),
            ));
        }
    }
    let ks = k_grid(k_range, step)?;
    let filters: Vec<AreaFilters> = cases
        .iter()
        .map(|(masked, _)| AreaFilters::default_for_spacing(masked.grid().spacing))
        .collect();
    let points: Vec<KSweepPoint> = ks
        .par_iter()
        .map(|&k| {
            let worst = cases
                .iter()
                .zip(&filters)
                .map(|((masked, gt), f)| case_error(masked, gt, f, k))
                .fold(0.0f64, f64::max);
            KSweepPoint {
                k,
                mean_ed_mm: worst,
            }
        })
        .collect();
    let qualifies: Vec<bool> = points
        .iter()
        .map(|p| p.mean_ed_mm < PLATEAU_ED_LIMIT_MM)
        .collect();
    let plateau = longest_run(&ks, &qualifies);
    Ok(Calibration { points, plateau })
}

/// Mean ED over all matched slices of both electrodes, or infinity when a
/// labelled electrode cannot be assembled or matches nothing.
fn case_error(masked: &MaskedVolume, gt: &GroundTruth, filters: &AreaFilters, k: f64) -> f64 {
    let sets = segment_volume(masked, k, filters);
    let spacing_z = masked.grid().spacing[2];
    let mut sum = 0.0;
    let mut matched = 0usize;
    for side in [Side::Left, Side::Right] {
        if gt.for_label(side).next().is_none() {
            continue;
        }
        let Ok(traj) = build_trajectory(&sets, side, spacing_z, k) else {
            return f64::INFINITY;
        };
        let dist = euclidean_distances(&traj, gt);
        if dist.matched.is_empty() {
            return f64::INFINITY;
        }
        sum += dist.matched.iter().map(|d| d.ed_mm).sum::<f64>();
        matched += dist.matched.len();
    }
    if matched == 0 {
        f64::INFINITY
    } else {
        sum / matched as f64
    }
}

fn k_grid(k_range: (f64, f64), step: f64) -> Result<Vec<f64>> {
    let (lo, hi) = k_range;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidParameter(format!(
            "k range [{lo}, {hi}] must be finite with lo < hi"
        )));
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "k step {step} must be a positive number"
        )));
    }
    // Tolerant floor so an exact multiple of step lands on hi despite fp dust.
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

fn longest_run(ks: &[f64], qualifies: &[bool]) -> Option<(f64, f64)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    // One extra iteration with ok = false closes a run ending at the last k.
    #[allow(clippy::needless_range_loop)]
    for i in 0..=ks.len() {
        let ok = i < ks.len() && qualifies[i];
        match (ok, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let longer = best.is_none_or(|(bs, be)| i - s > be - bs + 1);
                if longer {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    best.map(|(s, e)| (ks[s], ks[e]))
}

/// Two columns, `k` and `mean_ed_mm`; infinite scores serialize as `inf`.
pub fn write_sweep_csv(points: &[KSweepPoint], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(["k", "mean_ed_mm"])
        .map_err(|e| csv_error(path, e))?;
    for p in points {
        writer
            .write_record([format!("{}", p.k), format!("{}", p.mean_ed_mm)])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{apply_roi, default_atlas, rasterize_atlas};
    use crate::phantom::{generate, PhantomSpec};

    fn masked_phantom(noise_sigma: f64, seed: u64) -> (MaskedVolume, GroundTruth) {
        let spec = PhantomSpec {
            dims: [140, 140, 120],
            noise_sigma,
            seed,
            ..PhantomSpec::default()
        };
        let (volume, gt) = generate(&spec).expect("valid spec");
        let mask = rasterize_atlas(&default_atlas(), &volume.grid).expect("atlas overlaps");
        (apply_roi(volume, mask).expect("grids match"), gt)
    }

    #[test]
    fn grid_of_three_points() {
        let (masked, gt) = masked_phantom(0.0, 5);
        let cal = calibrate_k(&masked, &gt, (0.6, 0.62), 0.01).expect("sweep");
        assert_eq!(cal.points.len(), 3);
        assert!((cal.points[0].k - 0.60).abs() < 1e-12);
        assert!((cal.points[1].k - 0.61).abs() < 1e-12);
        assert!((cal.points[2].k - 0.62).abs() < 1e-12);
    }

    #[test]
    fn default_grid_has_891_points() {
        let ks = k_grid(DEFAULT_K_RANGE, DEFAULT_K_STEP).expect("valid");
        assert_eq!(ks.len(), 891);
        assert!((ks[0] - 0.6).abs() < 1e-12);
        assert!((ks[890] - 9.5).abs() < 1e-9);
    }

    #[test]
    fn noise_free_plateau_contains_published_band() {
        let (masked, gt) = masked_phantom(0.0, 5);
        let cal = calibrate_k(&masked, &gt, (6.0, 9.0), 0.25).expect("sweep");
        let (lo, hi) = cal.plateau.expect("plateau nonempty");
        assert!(lo <= 7.8 && 7.8 <= hi, "plateau [{lo}, {hi}] misses 7.8");
        for p in &cal.points {
            assert!(p.mean_ed_mm.is_finite());
        }
    }

    #[test]
    fn oversized_k_yields_failure_marker_not_crash() {
        let (masked, gt) = masked_phantom(15.0, 9);
        let cal = calibrate_k(&masked, &gt, (50.0, 50.02), 0.01).expect("sweep");
        assert_eq!(cal.points.len(), 3);
        for p in &cal.points {
            assert!(p.mean_ed_mm.is_infinite(), "k={} should fail", p.k);
        }
        assert!(cal.plateau.is_none());
    }

    #[test]
    fn plateau_stops_where_threshold_passes_metal() {
        // Slices hold at most a handful of metal voxels, so sigma never
        // exceeds ~137 HU and by k=40 the threshold tops electrode intensity
        // on every slice: the sweep records the failure marker there. At the
        // middle point only sigma-rich slices drop out and the trajectory
        // still assembles from the sparse ones.
        let (masked, gt) = masked_phantom(0.0, 5);
        let cal = calibrate_k(&masked, &gt, (7.8, 40.0), 16.1).expect("sweep");
        assert_eq!(cal.points.len(), 3);
        assert!(cal.points[0].mean_ed_mm.is_finite());
        assert!(cal.points[1].mean_ed_mm.is_finite());
        assert!(cal.points[2].mean_ed_mm.is_infinite());
        let (lo, hi) = cal.plateau.expect("finite band");
        assert!((lo - 7.8).abs() < 1e-12);
        assert!((hi - 23.9).abs() < 1e-12);
    }

    #[test]
    fn sweep_is_deterministic() {
        let (masked, gt) = masked_phantom(15.0, 13);
        let a = calibrate_k(&masked, &gt, (7.5, 7.9), 0.1).expect("sweep");
        let b = calibrate_k(&masked, &gt, (7.5, 7.9), 0.1).expect("sweep");
        assert_eq!(a, b);
    }

    #[test]
    fn longest_run_prefers_first_on_ties() {
        let ks = [1.0, 2.0, 3.0, 4.0, 5.0];
        let q = [true, true, false, true, true];
        assert_eq!(longest_run(&ks, &q), Some((1.0, 2.0)));
        let all = [true; 5];
        assert_eq!(longest_run(&ks, &all), Some((1.0, 5.0)));
        let none = [false; 5];
        assert_eq!(longest_run(&ks, &none), None);
    }

    #[test]
    fn invalid_ranges_rejected() {
        let (masked, gt) = masked_phantom(0.0, 5);
        assert!(calibrate_k(&masked, &gt, (2.0, 1.0), 0.1).is_err());
        assert!(calibrate_k(&masked, &gt, (1.0, 2.0), 0.0).is_err());
        assert!(calibrate_k(&masked, &gt, (1.0, 2.0), -0.5).is_err());
        let empty = GroundTruth::new(Vec::new()).expect("empty allowed");
        assert!(calibrate_k(&masked, &empty, (1.0, 2.0), 0.5).is_err());
    }

    #[test]
    fn multi_case_plateau_is_intersection() {
        let (a_vol, a_gt) = masked_phantom(0.0, 5);
        let (b_vol, b_gt) = masked_phantom(15.0, 6);
        let cases = [(&a_vol, &a_gt), (&b_vol, &b_gt)];
        let multi = calibrate_k_multi(&cases, (7.0, 8.0), 0.5).expect("sweep");
        let single = calibrate_k(&a_vol, &a_gt, (7.0, 8.0), 0.5).expect("sweep");
        for (m, s) in multi.points.iter().zip(&single.points) {
            assert!(m.mean_ed_mm >= s.mean_ed_mm, "worst case can only grow");
        }
        assert!(multi.plateau.is_some());
    }

    #[test]
    fn sweep_csv_roundtrips_inf_marker() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("sweep.csv");
        let points = vec![
            KSweepPoint {
                k: 7.8,
                mean_ed_mm: 0.25,
            },
            KSweepPoint {
                k: 50.0,
                mean_ed_mm: f64::INFINITY,
            },
        ];
        write_sweep_csv(&points, &path).expect("write");
        let text = std::fs::read_to_string(&path).expect("read");
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,mean_ed_mm"));
        assert_eq!(lines.next(), Some("7.8,0.25"));
        let last = lines.next().expect("marker row");
        let val: f64 = last.split(',').nth(1).expect("column").parse().expect("parse");
        assert!(val.is_infinite());
    }
}
