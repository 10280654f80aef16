//! Per-slice adaptive thresholding and centroid extraction.
//!
//! Each axial slice is thresholded at `T = k*sigma + mu`, where mu and
//! sigma are the mean and population standard deviation of the slice's
//! ROI-included voxels. Above-threshold pixels are grouped into connected
//! components, small/large components filtered, and the survivors
//! summarized as world-space centroids labeled left or right.

pub mod components;

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::MaskedVolume;
use crate::error::{Error, Result};

pub use components::{connected_components_2d, BinarySlice, Connectivity};

/// Which electrode a centroid belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(Error::InvalidParameter(format!(
                "unknown side '{other}' (expected left or right)"
            ))),
        }
    }
}

/// Per-slice intensity statistics and the threshold they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceStats {
    pub slice_index: usize,
    pub mu: f64,
    pub sigma: f64,
    pub threshold: f64,
    pub included_count: usize,
}

/// The threshold multiplier k in T = k*sigma + mu.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub k: f64,
}

impl ThresholdParams {
    pub fn new(k: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold multiplier k must be finite and >= 0, got {k}"
            )));
        }
        Ok(ThresholdParams { k })
    }
}

/// One summarized component on one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub position: [f64; 3],
    pub area_voxels: usize,
    pub mean_intensity: f64,
    pub label: Option<Side>,
}

/// All surviving centroids of one axial slice.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub slice_index: usize,
    pub centroids: Vec<Centroid>,
    /// Set when more than two components survived filtering and only the
    /// largest two were kept.
    pub ambiguous: bool,
}

/// Component-size window in voxels, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaFilters {
    pub min_area: usize,
    pub max_area: usize,
}

impl AreaFilters {
    /// Accept single voxels up to the area of a 10 mm diameter disc at
    /// the slice's in-plane spacing; larger blobs are bone leakage.
    pub fn default_for_spacing(spacing: [f64; 3]) -> Self {
        let disc_area_mm2 = std::f64::consts::PI * 5.0 * 5.0;
        let voxel_area = spacing[0] * spacing[1];
        AreaFilters {
            min_area: 1,
            max_area: (disc_area_mm2 / voxel_area).ceil() as usize,
        }
    }
}

/// Mean and population standard deviation of a slice's included voxels;
/// None when the slice is fully excluded.
pub fn slice_moments(masked: &MaskedVolume, slice_index: usize) -> Option<(f64, f64, usize)> {
    let n = masked.slice_included(slice_index).len();
    if n == 0 {
        return None;
    }
    let mut sum = 0.0f64;
    for v in masked.slice_values(slice_index) {
        sum += f64::from(v);
    }
    let mu = sum / n as f64;
    let mut sq = 0.0f64;
    for v in masked.slice_values(slice_index) {
        let d = f64::from(v) - mu;
        sq += d * d;
    }
    let sigma = (sq / n as f64).sqrt();
    Some((mu, sigma, n))
}

/// Statistics plus threshold for one slice; None marks a fully excluded
/// slice (it yields no centroids, which is not an error).
pub fn slice_stats(masked: &MaskedVolume, slice_index: usize, k: f64) -> Option<SliceStats> {
    let (mu, sigma, included_count) = slice_moments(masked, slice_index)?;
    Some(SliceStats {
        slice_index,
        mu,
        sigma,
        threshold: k * sigma + mu,
        included_count,
    })
}

/// Binarize one slice: an included voxel becomes 1 iff its intensity is
/// at or above the threshold; excluded voxels are always 0.
pub fn binarize_slice(masked: &MaskedVolume, stats: &SliceStats) -> BinarySlice {
    let [nx, ny, _] = masked.dims();
    let plane = masked.volume().slice_z(stats.slice_index);
    let mut mask = vec![false; nx * ny];
    let mut set_offsets = Vec::new();
    for &off in masked.slice_included(stats.slice_index) {
        if f64::from(plane[off as usize]) >= stats.threshold {
            mask[off as usize] = true;
            set_offsets.push(off);
        }
    }
    BinarySlice {
        nx,
        ny,
        mask,
        set_offsets,
    }
}

/// Summarize components of one slice as centroids, dropping those outside
/// the area window. Positions are unweighted means of member-voxel world
/// coordinates.
pub fn extract_centroids(
    comps: &[Vec<u32>],
    masked: &MaskedVolume,
    slice_index: usize,
    filters: &AreaFilters,
) -> CentroidSet {
    let [nx, _, _] = masked.dims();
    let plane = masked.volume().slice_z(slice_index);
    let grid = masked.grid();
    let mut centroids = Vec::new();
    for members in comps {
        let area = members.len();
        if area < filters.min_area || area > filters.max_area {
            continue;
        }
        let mut pos = [0.0f64; 3];
        let mut hu = 0.0f64;
        for &off in members {
            let i = (off as usize) % nx;
            let j = (off as usize) / nx;
            let w = grid.index_to_world([i as f64, j as f64, slice_index as f64]);
            for axis in 0..3 {
                pos[axis] += w[axis];
            }
            hu += f64::from(plane[off as usize]);
        }
        for p in &mut pos {
            *p /= area as f64;
        }
        centroids.push(Centroid {
            position: pos,
            area_voxels: area,
            mean_intensity: hu / area as f64,
            label: None,
        });
    }
    CentroidSet {
        slice_index,
        centroids,
        ambiguous: false,
    }
}

/// Pooled sagittal spread below which all centroids are treated as one
/// electrode rather than split at the midline.
const SINGLE_CLUSTER_SPREAD_MM: f64 = 6.0;

/// Assign left/right labels. The midline is the median sagittal (x)
/// coordinate of all centroids. Slices with two centroids always get
/// distinct labels (smaller x is left). Slices with more than two keep
/// the largest two by area and are flagged ambiguous. When the pooled x
/// spread is too small to contain two electrodes, every centroid takes
/// the side of the cluster mean relative to the grid's world center, so
/// a single electrode is never split in half.
pub fn classify_electrodes(sets: &[CentroidSet], grid_center_x: f64) -> Vec<CentroidSet> {
    let mut xs: Vec<f64> = sets
        .iter()
        .flat_map(|s| s.centroids.iter().map(|c| c.position[0]))
        .collect();
    if xs.is_empty() {
        return sets.to_vec();
    }
    xs.sort_by(f64::total_cmp);
    let midline = if xs.len() % 2 == 1 {
        xs[xs.len() / 2]
    } else {
        (xs[xs.len() / 2 - 1] + xs[xs.len() / 2]) / 2.0
    };
    let spread = xs[xs.len() - 1] - xs[0];
    let single_cluster = spread < SINGLE_CLUSTER_SPREAD_MM;
    let cluster_side = {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        if mean < grid_center_x {
            Side::Left
        } else {
            Side::Right
        }
    };

    sets.iter()
        .map(|set| {
            let mut out = set.clone();
            // Keep the largest two components when a slice is ambiguous.
            if out.centroids.len() > 2 {
                out.centroids
                    .sort_by_key(|c| std::cmp::Reverse(c.area_voxels));
                out.centroids.truncate(2);
                out.centroids
                    .sort_by(|a, b| a.position[0].total_cmp(&b.position[0]));
                out.ambiguous = true;
            }
            match out.centroids.len() {
                2 => {
                    let (a, b) = (out.centroids[0].position[0], out.centroids[1].position[0]);
                    let (first, second) = if a <= b {
                        (Side::Left, Side::Right)
                    } else {
                        (Side::Right, Side::Left)
                    };
                    out.centroids[0].label = Some(first);
                    out.centroids[1].label = Some(second);
                }
                1 => {
                    let x = out.centroids[0].position[0];
                    out.centroids[0].label = Some(if single_cluster {
                        cluster_side
                    } else if x < midline {
                        Side::Left
                    } else {
                        Side::Right
                    });
                }
                _ => {}
            }
            out
        })
        .collect()
}

/// Run the per-slice pipeline over every axial slice, in slice order:
/// statistics, binarization, components, centroid extraction, labeling.
pub fn segment_volume(masked: &MaskedVolume, k: f64, filters: &AreaFilters) -> Vec<CentroidSet> {
    let nz = masked.dims()[2];
    let sets: Vec<CentroidSet> = (0..nz)
        .into_par_iter()
        .map(|slice_index| match slice_stats(masked, slice_index, k) {
            Some(stats) => {
                let bin = binarize_slice(masked, &stats);
                let comps = connected_components_2d(&bin, Connectivity::Eight);
                extract_centroids(&comps, masked, slice_index, filters)
            }
            None => CentroidSet {
                slice_index,
                centroids: Vec::new(),
                ambiguous: false,
            },
        })
        .collect();
    classify_electrodes(&sets, masked.grid().world_center()[0])
}

/// Write centroids as CSV: slice_index, x_mm, y_mm, z_mm, area_voxels,
/// mean_hu, label.
pub fn write_centroid_csv(sets: &[CentroidSet], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io_error(path, e))?;
    w.write_record(["slice_index", "x_mm", "y_mm", "z_mm", "area_voxels", "mean_hu", "label"])
        .map_err(|e| csv_io_error(path, e))?;
    for set in sets {
        for c in &set.centroids {
            let label = c.label.map_or_else(|| "unassigned".to_string(), |s| s.to_string());
            w.write_record([
                set.slice_index.to_string(),
                format!("{}", c.position[0]),
                format!("{}", c.position[1]),
                format!("{}", c.position[2]),
                c.area_voxels.to_string(),
                format!("{}", c.mean_intensity),
                label,
            ])
            .map_err(|e| csv_io_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_io_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    #![allow(clippy::needless_range_loop)]
    use super::*;
    use crate::atlas::{apply_roi, RoiMask};
    use crate::volume::{GridSpec, Volume};
    use approx::assert_abs_diff_eq;

    /// Masked volume over a unit grid with the given slice values and an
    /// all-included mask.
    fn masked_from_slices(nx: usize, ny: usize, slices: &[Vec<f32>]) -> MaskedVolume {
        let nz = slices.len();
        let grid = GridSpec::axis_aligned([nx, ny, nz], [1.0; 3], [0.0; 3]).unwrap();
        let mut data = Vec::with_capacity(nx * ny * nz);
        for s in slices {
            assert_eq!(s.len(), nx * ny);
            data.extend_from_slice(s);
        }
        let vol = Volume::new(grid.clone(), data).unwrap();
        let mask = RoiMask::new(Volume::filled(grid, 1.0)).unwrap();
        apply_roi(vol, mask).unwrap()
    }

    #[test]
    fn constant_slice_has_zero_sigma() {
        let m = masked_from_slices(4, 4, &[vec![7.0; 16]]);
        let s = slice_stats(&m, 0, 3.5).unwrap();
        assert_eq!(s.mu, 7.0);
        assert_eq!(s.sigma, 0.0);
        assert_eq!(s.threshold, 7.0);
        assert_eq!(s.included_count, 16);
    }

    #[test]
    fn moments_match_hand_arithmetic() {
        let m = masked_from_slices(2, 2, &[vec![0.0, 0.0, 100.0, 100.0]]);
        let s = slice_stats(&m, 0, 0.9).unwrap();
        assert_abs_diff_eq!(s.mu, 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sigma, 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.threshold, 95.0, epsilon = 1e-12);
    }

    #[test]
    fn k_zero_threshold_is_mu() {
        let m = masked_from_slices(3, 1, &[vec![1.0, 2.0, 6.0]]);
        let s = slice_stats(&m, 0, 0.0).unwrap();
        assert_eq!(s.threshold, s.mu);
    }

    #[test]
    fn fully_excluded_slice_yields_no_stats() {
        let grid = GridSpec::axis_aligned([2, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
        let vol = Volume::filled(grid.clone(), 5.0);
        let mut mv = Volume::filled(grid, 0.0);
        mv.set(0, 0, 0, 1.0);
        let masked = apply_roi(vol, RoiMask::new(mv).unwrap()).unwrap();
        assert!(slice_stats(&masked, 0, 1.0).is_some());
        assert!(slice_stats(&masked, 1, 1.0).is_none());
    }

    #[test]
    fn binarize_uses_at_least_convention() {
        let m = masked_from_slices(3, 1, &[vec![1.0, 2.0, 3.0]]);
        // mu=2, sigma=sqrt(2/3); pick k so the threshold lands exactly on 3.
        let sigma = (2.0f64 / 3.0).sqrt();
        let k = 1.0 / sigma;
        let stats = slice_stats(&m, 0, k).unwrap();
        assert_abs_diff_eq!(stats.threshold, 3.0, epsilon = 1e-12);
        let bin = binarize_slice(&m, &stats);
        assert_eq!(bin.mask, vec![false, false, true]);
    }

    #[test]
    fn binarize_all_below_threshold_is_empty() {
        let m = masked_from_slices(2, 2, &[vec![1.0, 2.0, 3.0, 4.0]]);
        let stats = slice_stats(&m, 0, 10.0).unwrap();
        let bin = binarize_slice(&m, &stats);
        assert!(bin.set_offsets.is_empty());
    }

    #[test]
    fn lone_bright_voxel_survives_high_k() {
        // 1599 soft-tissue voxels near 40 HU and one 4000 HU voxel: at
        // k=7.8 the threshold stays far below 4000 but above the tissue.
        // The slice must be big enough that the bright voxel does not
        // dominate the slice statistics itself.
        let mut vals = vec![40.0f32; 1600];
        for (n, v) in vals.iter_mut().enumerate().take(1599) {
            *v += (n % 7) as f32 - 3.0;
        }
        vals[1599] = 4000.0;
        let m = masked_from_slices(40, 40, &[vals.clone()]);
        let stats = slice_stats(&m, 0, 7.8).unwrap();
        let n = vals.len() as f64;
        let mu: f64 = vals.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let sq: f64 = vals.iter().map(|&v| (f64::from(v) - mu).powi(2)).sum::<f64>() / n;
        assert_abs_diff_eq!(stats.threshold, 7.8 * sq.sqrt() + mu, epsilon = 1e-9);
        assert!(stats.threshold > 100.0 && stats.threshold < 4000.0);
        let bin = binarize_slice(&m, &stats);
        assert_eq!(bin.set_offsets, vec![1599]);
    }

    #[test]
    fn threshold_monotone_in_k_and_sets_nested() {
        let mut state = 77u64;
        let mut next = || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            ((z ^ (z >> 31)) % 2000) as f32
        };
        let vals: Vec<f32> = (0..64).map(|_| next()).collect();
        let m = masked_from_slices(8, 8, &[vals]);
        let mut prev_set: Option<Vec<u32>> = None;
        let mut prev_threshold = f64::NEG_INFINITY;
        for step in 0..20 {
            let k = step as f64 * 0.5;
            let stats = slice_stats(&m, 0, k).unwrap();
            assert!(stats.threshold >= prev_threshold);
            prev_threshold = stats.threshold;
            let set = binarize_slice(&m, &stats).set_offsets;
            if let Some(prev) = &prev_set {
                assert!(set.iter().all(|o| prev.contains(o)), "k={k} grew the set");
            }
            prev_set = Some(set);
        }
    }

    #[test]
    fn threshold_identity_holds_on_random_slices() {
        // 100 random slices with random sizes, intensities, and k values;
        // the reported threshold must equal k*sigma + mu where mu and the
        // population sigma are recomputed here from the raw values.
        let mut state = 0x5eed_cafe_f00d_0001u64;
        let mut next = move || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        };
        for _ in 0..100 {
            let nx = 2 + (next() % 30) as usize;
            let ny = 1 + (next() % 30) as usize;
            let vals: Vec<f32> = (0..nx * ny)
                .map(|_| (next() % 4_000_000) as f32 / 1000.0 - 1024.0)
                .collect();
            let k = (next() % 9500) as f64 / 1000.0;
            let m = masked_from_slices(nx, ny, std::slice::from_ref(&vals));
            let stats = slice_stats(&m, 0, k).unwrap();
            let n = vals.len() as f64;
            let mu = vals.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            let var = vals
                .iter()
                .map(|&v| (f64::from(v) - mu).powi(2))
                .sum::<f64>()
                / n;
            assert_abs_diff_eq!(stats.mu, mu, epsilon = 1e-9);
            assert_abs_diff_eq!(stats.sigma, var.sqrt(), epsilon = 1e-9);
            assert_abs_diff_eq!(stats.threshold, k * var.sqrt() + mu, epsilon = 1e-9);
        }
    }

    #[test]
    fn stats_ignore_excluded_voxels_entirely() {
        let grid = GridSpec::axis_aligned([4, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let mut mask = Volume::filled(grid.clone(), 0.0);
        mask.set(0, 0, 0, 1.0);
        mask.set(1, 0, 0, 1.0);
        let vol_a = Volume::new(grid.clone(), vec![10.0, 20.0, 9e8, -9e8]).unwrap();
        let vol_b = Volume::new(grid, vec![10.0, 20.0, 0.0, 55.5]).unwrap();
        let ma = apply_roi(vol_a, RoiMask::new(mask.clone()).unwrap()).unwrap();
        let mb = apply_roi(vol_b, RoiMask::new(mask).unwrap()).unwrap();
        assert_eq!(slice_stats(&ma, 0, 2.5), slice_stats(&mb, 0, 2.5));
    }

    #[test]
    fn single_pixel_centroid_at_voxel_center() {
        let mut vals = vec![0.0f32; 25];
        vals[2 + 5 * 3] = 500.0;
        let m = masked_from_slices(5, 5, &[vals]);
        let stats = slice_stats(&m, 0, 1.0).unwrap();
        let bin = binarize_slice(&m, &stats);
        let comps = connected_components_2d(&bin, Connectivity::Eight);
        let filters = AreaFilters {
            min_area: 1,
            max_area: 100,
        };
        let set = extract_centroids(&comps, &m, 0, &filters);
        assert_eq!(set.centroids.len(), 1);
        assert_eq!(set.centroids[0].position, [2.0, 3.0, 0.0]);
        assert_eq!(set.centroids[0].area_voxels, 1);
        assert_eq!(set.centroids[0].mean_intensity, 500.0);
    }

    #[test]
    fn square_centroid_at_geometric_center() {
        let mut vals = vec![0.0f32; 49];
        for j in 2..5 {
            for i in 2..5 {
                vals[i + 7 * j] = 100.0;
            }
        }
        let m = masked_from_slices(7, 7, &[vals]);
        let stats = slice_stats(&m, 0, 1.0).unwrap();
        let bin = binarize_slice(&m, &stats);
        let comps = connected_components_2d(&bin, Connectivity::Eight);
        let set = extract_centroids(
            &comps,
            &m,
            0,
            &AreaFilters {
                min_area: 1,
                max_area: 100,
            },
        );
        assert_eq!(set.centroids.len(), 1);
        assert_eq!(set.centroids[0].position, [3.0, 3.0, 0.0]);
        assert_eq!(set.centroids[0].area_voxels, 9);
    }

    #[test]
    fn plus_shape_matches_brute_force_mean() {
        let mut vals = vec![0.0f32; 81];
        let members = [(4usize, 3usize), (3, 4), (4, 4), (5, 4), (4, 5)];
        for &(i, j) in &members {
            vals[i + 9 * j] = 900.0;
        }
        let m = masked_from_slices(9, 9, &[vals]);
        let stats = slice_stats(&m, 0, 1.0).unwrap();
        let bin = binarize_slice(&m, &stats);
        let comps = connected_components_2d(&bin, Connectivity::Eight);
        let set = extract_centroids(
            &comps,
            &m,
            0,
            &AreaFilters {
                min_area: 1,
                max_area: 100,
            },
        );
        let mut want = [0.0f64; 3];
        for &(i, j) in &members {
            let w = m.grid().index_to_world([i as f64, j as f64, 0.0]);
            for axis in 0..3 {
                want[axis] += w[axis] / members.len() as f64;
            }
        }
        for axis in 0..3 {
            assert_abs_diff_eq!(set.centroids[0].position[axis], want[axis], epsilon = 1e-9);
        }
    }

    #[test]
    fn area_filters_drop_small_and_large() {
        let mut vals = vec![0.0f32; 100];
        vals[1] = 500.0; // size 1
        for j in 5..9 {
            for i in 5..9 {
                vals[i + 10 * j] = 500.0; // size 16
            }
        }
        let m = masked_from_slices(10, 10, &[vals]);
        let stats = slice_stats(&m, 0, 1.0).unwrap();
        let bin = binarize_slice(&m, &stats);
        let comps = connected_components_2d(&bin, Connectivity::Eight);
        let set = extract_centroids(
            &comps,
            &m,
            0,
            &AreaFilters {
                min_area: 2,
                max_area: 15,
            },
        );
        assert!(set.centroids.is_empty());
    }

    fn set_with(slice: usize, xs: &[(f64, usize)]) -> CentroidSet {
        CentroidSet {
            slice_index: slice,
            centroids: xs
                .iter()
                .map(|&(x, area)| Centroid {
                    position: [x, 0.0, slice as f64],
                    area_voxels: area,
                    mean_intensity: 1000.0,
                    label: None,
                })
                .collect(),
            ambiguous: false,
        }
    }

    #[test]
    fn two_centroids_split_left_right() {
        let sets = vec![set_with(0, &[(-12.0, 3), (12.0, 3)])];
        let out = classify_electrodes(&sets, 0.0);
        assert_eq!(out[0].centroids[0].label, Some(Side::Left));
        assert_eq!(out[0].centroids[1].label, Some(Side::Right));
    }

    #[test]
    fn single_cluster_never_split() {
        // One electrode drifting slightly around x=+20: median-based
        // splitting would cut it in half; the cluster rule must not.
        let sets: Vec<CentroidSet> = (0..10)
            .map(|s| set_with(s, &[(20.0 + 0.3 * s as f64, 3)]))
            .collect();
        let out = classify_electrodes(&sets, 0.0);
        for set in &out {
            assert_eq!(set.centroids[0].label, Some(Side::Right));
        }
    }

    #[test]
    fn single_cluster_on_left_side() {
        let sets: Vec<CentroidSet> = (0..10)
            .map(|s| set_with(s, &[(-15.0 - 0.2 * s as f64, 3)]))
            .collect();
        let out = classify_electrodes(&sets, 0.0);
        for set in &out {
            assert_eq!(set.centroids[0].label, Some(Side::Left));
        }
    }

    #[test]
    fn jittered_two_line_labels_agree_with_membership() {
        let mut state = 31u64;
        let mut jitter = || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            ((z ^ (z >> 31)) % 1000) as f64 / 1000.0 * 2.0 - 1.0
        };
        let mut sets = Vec::new();
        for s in 0..40 {
            // Left line near -12, right near +12, each jittered by <1mm;
            // some slices miss one electrode.
            let mut xs = Vec::new();
            if s % 7 != 3 {
                xs.push((-12.0 + jitter(), 3));
            }
            if s % 11 != 5 {
                xs.push((12.0 + jitter(), 3));
            }
            sets.push(set_with(s, &xs));
        }
        let out = classify_electrodes(&sets, 0.0);
        for set in &out {
            for c in &set.centroids {
                let want = if c.position[0] < 0.0 { Side::Left } else { Side::Right };
                assert_eq!(c.label, Some(want), "slice {}", set.slice_index);
            }
        }
    }

    #[test]
    fn three_components_keep_largest_two_marked_ambiguous() {
        let sets = vec![set_with(0, &[(-10.0, 5), (0.0, 1), (10.0, 4)])];
        let out = classify_electrodes(&sets, 0.0);
        assert!(out[0].ambiguous);
        assert_eq!(out[0].centroids.len(), 2);
        assert_eq!(out[0].centroids[0].position[0], -10.0);
        assert_eq!(out[0].centroids[0].label, Some(Side::Left));
        assert_eq!(out[0].centroids[1].position[0], 10.0);
        assert_eq!(out[0].centroids[1].label, Some(Side::Right));
    }

    #[test]
    fn centroid_translation_equivariance() {
        // Same data, world origin shifted by d: every centroid shifts by d.
        let mut vals = vec![0.0f32; 64];
        vals[10] = 800.0;
        vals[45] = 800.0;
        let nx = 8;
        let d = [3.5, -2.25, 10.0];
        let make = |origin: [f64; 3]| {
            let grid = GridSpec::axis_aligned([nx, 8, 1], [1.0; 3], origin).unwrap();
            let vol = Volume::new(grid.clone(), vals.clone()).unwrap();
            let mask = RoiMask::new(Volume::filled(grid, 1.0)).unwrap();
            let m = apply_roi(vol, mask).unwrap();
            segment_volume(&m, 2.0, &AreaFilters { min_area: 1, max_area: 50 })
        };
        let base = make([0.0, 0.0, 0.0]);
        let moved = make(d);
        for (a, b) in base.iter().zip(&moved) {
            assert_eq!(a.centroids.len(), b.centroids.len());
            for (ca, cb) in a.centroids.iter().zip(&b.centroids) {
                for axis in 0..3 {
                    assert_abs_diff_eq!(
                        ca.position[axis] + d[axis],
                        cb.position[axis],
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn segment_volume_is_deterministic() {
        let mut vals0 = vec![30.0f32; 100];
        vals0[33] = 2000.0;
        vals0[66] = 2000.0;
        let mut vals1 = vec![31.0f32; 100];
        vals1[34] = 2000.0;
        let m = masked_from_slices(10, 10, &[vals0, vals1]);
        let f = AreaFilters {
            min_area: 1,
            max_area: 50,
        };
        let a = segment_volume(&m, 3.0, &f);
        let b = segment_volume(&m, 3.0, &f);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].slice_index, 0);
        assert_eq!(a[1].slice_index, 1);
    }

    #[test]
    fn centroid_csv_written_with_header() {
        let sets = vec![
            CentroidSet {
                slice_index: 4,
                centroids: vec![Centroid {
                    position: [1.5, -2.0, 4.0],
                    area_voxels: 3,
                    mean_intensity: 2100.0,
                    label: Some(Side::Left),
                }],
                ambiguous: false,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("centroids.csv");
        write_centroid_csv(&sets, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "slice_index,x_mm,y_mm,z_mm,area_voxels,mean_hu,label"
        );
        assert_eq!(lines.next().unwrap(), "4,1.5,-2,4,3,2100,left");
    }
}
