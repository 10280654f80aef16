//! Piecewise-box region-of-interest atlas and mask application.
//!
//! The atlas lives in a reference (MNI-style, RAS+ mm) frame as a stack
//! of axial segments, each a coronal interval swept over a shared
//! sagittal interval. Rasterized on a grid it becomes a binary
//! [`RoiMask`]; warped into a scan's frame it restricts which voxels the
//! segmentation statistics see.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::interp::Nearest;
use crate::spatial::resample::resample;
use crate::spatial::transform::AffineTransform;
use crate::volume::{GridSpec, Volume};

pub const ATLAS_SCHEMA: u32 = 1;

/// One axial slab of the atlas: an axial (z) interval paired with the
/// coronal (y) interval valid inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtlasSegment {
    pub axial_range: (f64, f64),
    pub coronal_range: (f64, f64),
}

/// The full ROI: a sagittal (x) interval shared by every segment, and
/// the axial segments ordered caudal to cranial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasBoxStack {
    pub sagittal_range: (f64, f64),
    pub segments: Vec<AtlasSegment>,
}

impl AtlasBoxStack {
    pub fn new(sagittal_range: (f64, f64), segments: Vec<AtlasSegment>) -> Result<Self> {
        let check = |name: &str, (lo, hi): (f64, f64)| {
            if lo < hi && lo.is_finite() && hi.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} range ({lo}, {hi}) must satisfy lo < hi"
                )))
            }
        };
        check("sagittal", sagittal_range)?;
        if segments.is_empty() {
            return Err(Error::InvalidParameter("atlas needs at least one segment".into()));
        }
        for (n, seg) in segments.iter().enumerate() {
            check(&format!("segment {n} axial"), seg.axial_range)?;
            check(&format!("segment {n} coronal"), seg.coronal_range)?;
        }
        for pair in segments.windows(2) {
            if pair[0].axial_range.1 >= pair[1].axial_range.0 {
                return Err(Error::InvalidParameter(format!(
                    "axial segments must be disjoint and ascending: {:?} then {:?}",
                    pair[0].axial_range, pair[1].axial_range
                )));
            }
        }
        Ok(AtlasBoxStack {
            sagittal_range,
            segments,
        })
    }

    /// Membership with closed intervals: a point exactly on a face is in.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let [x, y, z] = p;
        if x < self.sagittal_range.0 || x > self.sagittal_range.1 {
            return false;
        }
        self.segments.iter().any(|seg| {
            z >= seg.axial_range.0
                && z <= seg.axial_range.1
                && y >= seg.coronal_range.0
                && y <= seg.coronal_range.1
        })
    }

    /// Tight world bounds (x, y, z) over all segments.
    pub fn bounds(&self) -> [(f64, f64); 3] {
        let y_lo = self
            .segments
            .iter()
            .map(|s| s.coronal_range.0)
            .fold(f64::INFINITY, f64::min);
        let y_hi = self
            .segments
            .iter()
            .map(|s| s.coronal_range.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let z_lo = self.segments[0].axial_range.0;
        let z_hi = self.segments[self.segments.len() - 1].axial_range.1;
        [self.sagittal_range, (y_lo, y_hi), (z_lo, z_hi)]
    }
}

/// The stimulation-target corridor: 80 mm wide sagittally, stacked from
/// a narrow caudal slab to a wider cranial one.
pub fn default_atlas() -> AtlasBoxStack {
    AtlasBoxStack::new(
        (-40.0, 40.0),
        vec![
            AtlasSegment {
                axial_range: (-49.0, -39.5),
                coronal_range: (-30.0, 3.0),
            },
            AtlasSegment {
                axial_range: (-39.0, 1.5),
                coronal_range: (-30.0, 22.0),
            },
            AtlasSegment {
                axial_range: (2.0, 31.0),
                coronal_range: (-30.0, 32.0),
            },
        ],
    )
    .expect("built-in atlas ranges are valid")
}

/// Axis-aligned grid covering the atlas bounds plus `margin` mm on every
/// side, at the given isotropic spacing. Voxel centers are staggered half
/// a voxel off the atlas faces so closed-interval membership stays
/// unbiased across resolutions; pass margin >= spacing/2 so the outermost
/// centers still cover the bounds.
pub fn atlas_bounding_grid(atlas: &AtlasBoxStack, spacing: f64, margin: f64) -> Result<GridSpec> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::InvalidParameter(format!("grid spacing {spacing}")));
    }
    let b = atlas.bounds();
    let mut dims = [0usize; 3];
    let mut origin = [0.0f64; 3];
    for axis in 0..3 {
        let lo = b[axis].0 - margin + spacing / 2.0;
        let hi = b[axis].1 + margin;
        dims[axis] = ((hi - lo) / spacing).ceil() as usize + 1;
        origin[axis] = lo;
    }
    GridSpec::axis_aligned(dims, [spacing; 3], origin)
}

/// A binary inclusion mask: a volume whose values are exactly 0 or 1,
/// with at least one included voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    volume: Volume,
}

impl RoiMask {
    pub fn new(volume: Volume) -> Result<Self> {
        if volume.data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter(
                "mask values must be exactly 0 or 1".into(),
            ));
        }
        if !volume.data.contains(&1.0) {
            return Err(Error::EmptyRoi("mask includes no voxels".into()));
        }
        Ok(RoiMask { volume })
    }

    pub fn volume(&self) -> &Volume {
        &self.volume
    }

    pub fn into_volume(self) -> Volume {
        self.volume
    }

    pub fn grid(&self) -> &GridSpec {
        &self.volume.grid
    }

    pub fn included_count(&self) -> usize {
        self.volume.data.iter().filter(|&&v| v == 1.0).count()
    }

    #[inline]
    pub fn is_included(&self, i: usize, j: usize, k: usize) -> bool {
        self.volume.get(i, j, k) == 1.0
    }
}

/// Rasterize the atlas onto a grid in the atlas's own frame: a voxel is
/// included iff its center lies inside the atlas.
pub fn rasterize_atlas(atlas: &AtlasBoxStack, grid: &GridSpec) -> Result<RoiMask> {
    let [nx, ny, _] = grid.dims;
    let plane = nx * ny;
    let mut data = vec![0.0f32; grid.voxel_count()];
    data.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..ny {
            for i in 0..nx {
                let w = grid.index_to_world([i as f64, j as f64, k as f64]);
                if atlas.contains(w) {
                    slab[i + nx * j] = 1.0;
                }
            }
        }
    });
    let volume = Volume::new(grid.clone(), data)?;
    RoiMask::new(volume).map_err(|e| match e {
        Error::EmptyRoi(_) => Error::EmptyRoi("grid lies entirely outside the atlas".into()),
        other => other,
    })
}

/// Carry a mask into another frame: nearest-neighbor resample under the
/// forward transform `t` (mask frame into target frame).
pub fn warp_mask(mask: &RoiMask, t: &AffineTransform, target: &GridSpec) -> Result<RoiMask> {
    let warped = resample(mask.volume(), t, target, &Nearest, 0.0)?;
    RoiMask::new(warped).map_err(|e| match e {
        Error::EmptyRoi(_) => Error::EmptyRoi("warped mask includes no voxels".into()),
        other => other,
    })
}

/// A volume restricted to an inclusion mask. Excluded voxels keep their
/// stored intensity but are invisible to statistics; per-slice offsets of
/// included voxels are precomputed so slice passes cost O(included).
#[derive(Debug, Clone)]
pub struct MaskedVolume {
    volume: Volume,
    mask: RoiMask,
    slice_offsets: Vec<Vec<u32>>,
}

impl MaskedVolume {
    pub fn volume(&self) -> &Volume {
        &self.volume
    }

    pub fn mask(&self) -> &RoiMask {
        &self.mask
    }

    pub fn grid(&self) -> &GridSpec {
        &self.volume.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.volume.dims()
    }

    /// In-plane flat offsets (i + nx*j) of included voxels on slice k.
    pub fn slice_included(&self, k: usize) -> &[u32] {
        &self.slice_offsets[k]
    }

    pub fn included_count(&self) -> usize {
        self.slice_offsets.iter().map(Vec::len).sum()
    }

    /// Intensities of included voxels on slice k.
    pub fn slice_values<'a>(&'a self, k: usize) -> impl Iterator<Item = f32> + 'a {
        let plane = self.volume.slice_z(k);
        self.slice_offsets[k].iter().map(move |&off| plane[off as usize])
    }
}

/// Restrict a volume to a mask. Grids must agree: same dims, affine
/// within 1e-6 (absolute or relative per entry).
pub fn apply_roi(volume: Volume, mask: RoiMask) -> Result<MaskedVolume> {
    if volume.dims() != mask.grid().dims {
        return Err(Error::GridMismatch(format!(
            "volume dims {:?} vs mask dims {:?}",
            volume.dims(),
            mask.grid().dims
        )));
    }
    let va = volume.grid.voxel_to_world().to_rows();
    let ma = mask.grid().voxel_to_world().to_rows();
    for r in 0..4 {
        for c in 0..4 {
            let diff = (va[r][c] - ma[r][c]).abs();
            if diff > 1e-6 * va[r][c].abs().max(1.0) {
                return Err(Error::GridMismatch(format!(
                    "volume and mask affines differ at [{r}][{c}]: {} vs {}",
                    va[r][c], ma[r][c]
                )));
            }
        }
    }

    let [nx, ny, nz] = volume.dims();
    let plane = nx * ny;
    let slice_offsets: Vec<Vec<u32>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mv = mask.volume().slice_z(k);
            (0..plane as u32).filter(|&off| mv[off as usize] == 1.0).collect()
        })
        .collect();

    Ok(MaskedVolume {
        volume,
        mask,
        slice_offsets,
    })
}

#[derive(Serialize, Deserialize)]
struct AtlasFile {
    schema: u32,
    sagittal_range: (f64, f64),
    segments: Vec<AtlasSegment>,
}

pub fn write_atlas_json(atlas: &AtlasBoxStack, path: &Path) -> Result<()> {
    let file = AtlasFile {
        schema: ATLAS_SCHEMA,
        sagittal_range: atlas.sagittal_range,
        segments: atlas.segments.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::InvalidParameter(format!("atlas serialization: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_atlas_json(path: &Path) -> Result<AtlasBoxStack> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: AtlasFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(path, format!("atlas JSON: {e}")))?;
    if file.schema != ATLAS_SCHEMA {
        return Err(Error::format(
            path,
            format!("atlas schema {} (expected {})", file.schema, ATLAS_SCHEMA),
        ));
    }
    AtlasBoxStack::new(file.sagittal_range, file.segments)
}

#[cfg(test)]
mod tests {
    // Axis loops index several parallel arrays; enumerate adds nothing.
    #![allow(clippy::needless_range_loop)]
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_atlas_extents() {
        let a = default_atlas();
        assert_eq!(a.sagittal_range.1 - a.sagittal_range.0, 80.0);
        let cranial = a.segments.last().unwrap();
        assert_eq!(cranial.coronal_range, (-30.0, 32.0));
        let [_, _, (z_lo, z_hi)] = a.bounds();
        assert_eq!(z_hi - z_lo, 80.0);
    }

    #[test]
    fn membership_spot_checks() {
        let a = default_atlas();
        assert!(a.contains([0.0, 0.0, -45.0]));
        assert!(!a.contains([0.0, 10.0, -45.0]));
        assert!(a.contains([0.0, 10.0, 0.0]));
        assert!(a.contains([-40.0, 0.0, -45.0])); // face point, closed interval
        assert!(!a.contains([-40.01, 0.0, -45.0]));
        assert!(!a.contains([0.0, 0.0, -39.2])); // gap between segments
    }

    #[test]
    fn overlapping_segments_rejected() {
        let r = AtlasBoxStack::new(
            (-1.0, 1.0),
            vec![
                AtlasSegment {
                    axial_range: (0.0, 5.0),
                    coronal_range: (0.0, 1.0),
                },
                AtlasSegment {
                    axial_range: (5.0, 9.0),
                    coronal_range: (0.0, 1.0),
                },
            ],
        );
        assert!(r.is_err());
    }

    #[test]
    fn degenerate_range_rejected() {
        let r = AtlasBoxStack::new(
            (2.0, 2.0),
            vec![AtlasSegment {
                axial_range: (0.0, 1.0),
                coronal_range: (0.0, 1.0),
            }],
        );
        assert!(r.is_err());
    }

    #[test]
    fn rasterize_matches_brute_force() {
        let a = default_atlas();
        let grid = GridSpec::axis_aligned(
            [32, 32, 32],
            [3.0, 2.5, 3.0],
            [-46.0, -36.0, -55.0],
        )
        .unwrap();
        let mask = rasterize_atlas(&a, &grid).unwrap();
        let mut expected = 0usize;
        for k in 0..32 {
            for j in 0..32 {
                for i in 0..32 {
                    let w = grid.index_to_world([i as f64, j as f64, k as f64]);
                    let inside = a.contains(w);
                    assert_eq!(
                        mask.is_included(i, j, k),
                        inside,
                        "voxel ({i},{j},{k}) at {w:?}"
                    );
                    expected += usize::from(inside);
                }
            }
        }
        assert_eq!(mask.included_count(), expected);
        assert!(expected > 0);
    }

    #[test]
    fn rasterize_outside_atlas_is_empty_roi() {
        let a = default_atlas();
        let grid = GridSpec::axis_aligned([8, 8, 8], [1.0; 3], [500.0, 500.0, 500.0]).unwrap();
        assert!(matches!(
            rasterize_atlas(&a, &grid),
            Err(Error::EmptyRoi(_))
        ));
    }

    #[test]
    fn rasterized_volume_converges_with_resolution() {
        let a = default_atlas();
        let coarse = atlas_bounding_grid(&a, 2.0, 4.0).unwrap();
        let fine = atlas_bounding_grid(&a, 1.0, 4.0).unwrap();
        let vol = |g: &GridSpec| {
            let m = rasterize_atlas(&a, g).unwrap();
            m.included_count() as f64 * g.spacing.iter().product::<f64>()
        };
        let vc = vol(&coarse);
        let vf = vol(&fine);
        assert!(
            (vc - vf).abs() / vf < 0.02,
            "coarse {vc} mm^3 vs fine {vf} mm^3"
        );
    }

    #[test]
    fn all_zero_mask_rejected() {
        let grid = GridSpec::axis_aligned([4, 4, 4], [1.0; 3], [0.0; 3]).unwrap();
        assert!(matches!(
            RoiMask::new(Volume::filled(grid.clone(), 0.0)),
            Err(Error::EmptyRoi(_))
        ));
        assert!(RoiMask::new(Volume::filled(grid.clone(), 0.5)).is_err());
        assert!(RoiMask::new(Volume::filled(grid, 1.0)).is_ok());
    }

    #[test]
    fn apply_roi_identity_mask_keeps_everything() {
        let grid = GridSpec::axis_aligned([4, 3, 2], [1.0; 3], [0.0; 3]).unwrap();
        let mut v = Volume::filled(grid.clone(), 0.0);
        for (n, s) in v.data.iter_mut().enumerate() {
            *s = n as f32;
        }
        let mask = RoiMask::new(Volume::filled(grid, 1.0)).unwrap();
        let masked = apply_roi(v.clone(), mask).unwrap();
        assert_eq!(masked.included_count(), 24);
        for k in 0..2 {
            let vals: Vec<f32> = masked.slice_values(k).collect();
            assert_eq!(vals, v.slice_z(k));
        }
    }

    #[test]
    fn apply_roi_checkerboard_popcount() {
        let grid = GridSpec::axis_aligned([6, 6, 4], [1.0; 3], [0.0; 3]).unwrap();
        let v = Volume::filled(grid.clone(), 7.0);
        let mut m = Volume::filled(grid, 0.0);
        let mut pop = 0usize;
        for k in 0..4 {
            for j in 0..6 {
                for i in 0..6 {
                    if (i + j + k) % 2 == 0 {
                        m.set(i, j, k, 1.0);
                        pop += 1;
                    }
                }
            }
        }
        let masked = apply_roi(v, RoiMask::new(m).unwrap()).unwrap();
        assert_eq!(masked.included_count(), pop);
        assert!(masked.slice_values(1).all(|x| x == 7.0));
    }

    #[test]
    fn apply_roi_grid_mismatch_rejected() {
        let ga = GridSpec::axis_aligned([4, 4, 4], [1.0; 3], [0.0; 3]).unwrap();
        let gb = GridSpec::axis_aligned([4, 4, 4], [1.0; 3], [5.0, 0.0, 0.0]).unwrap();
        let v = Volume::filled(ga, 1.0);
        let m = RoiMask::new(Volume::filled(gb, 1.0)).unwrap();
        assert!(matches!(apply_roi(v, m), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn warp_identity_reproduces_mask() {
        let a = default_atlas();
        let grid = atlas_bounding_grid(&a, 3.0, 3.0).unwrap();
        let mask = rasterize_atlas(&a, &grid).unwrap();
        let same = warp_mask(&mask, &AffineTransform::identity(), &grid).unwrap();
        assert_eq!(mask.volume().data, same.volume().data);
    }

    #[test]
    fn warp_one_voxel_translation_shifts_indices() {
        let grid = GridSpec::axis_aligned([10, 10, 10], [2.0; 3], [0.0; 3]).unwrap();
        let mut m = Volume::filled(grid.clone(), 0.0);
        for k in 3..7 {
            for j in 3..7 {
                for i in 3..7 {
                    m.set(i, j, k, 1.0);
                }
            }
        }
        let mask = RoiMask::new(m).unwrap();
        // +2 mm along x is exactly one voxel at 2 mm spacing.
        let t = AffineTransform::translation([2.0, 0.0, 0.0]);
        let shifted = warp_mask(&mask, &t, &grid).unwrap();
        for k in 0..10 {
            for j in 0..10 {
                for i in 1..10 {
                    assert_eq!(
                        shifted.is_included(i, j, k),
                        mask.is_included(i - 1, j, k),
                        "voxel ({i},{j},{k})"
                    );
                }
            }
        }
    }

    #[test]
    fn warp_small_rotation_roughly_preserves_volume() {
        let a = default_atlas();
        let grid = atlas_bounding_grid(&a, 2.0, 12.0).unwrap();
        let mask = rasterize_atlas(&a, &grid).unwrap();
        let t = AffineTransform::rotation_euler_about(
            grid.world_center(),
            [0.0, 0.0, 5.0f64.to_radians()],
        );
        let warped = warp_mask(&mask, &t, &grid).unwrap();
        let before = mask.included_count() as f64;
        let after = warped.included_count() as f64;
        assert!(
            (after - before).abs() / before < 0.05,
            "{before} -> {after}"
        );
        assert!(warped.volume().data.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn atlas_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atlas.json");
        let a = default_atlas();
        write_atlas_json(&a, &path).unwrap();
        let back = read_atlas_json(&path).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn atlas_json_schema_guard() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atlas.json");
        std::fs::write(
            &path,
            r#"{"schema": 2, "sagittal_range": [-1, 1], "segments": []}"#,
        )
        .unwrap();
        assert!(matches!(read_atlas_json(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn bounding_grid_covers_atlas() {
        let a = default_atlas();
        let g = atlas_bounding_grid(&a, 1.0, 2.0).unwrap();
        let b = a.bounds();
        for axis in 0..3 {
            let lo = g.index_to_world([0.0, 0.0, 0.0])[axis];
            let hi = g.index_to_world([
                g.dims[0] as f64 - 1.0,
                g.dims[1] as f64 - 1.0,
                g.dims[2] as f64 - 1.0,
            ])[axis];
            assert!(lo <= b[axis].0 && hi >= b[axis].1, "axis {axis}: {lo}..{hi}");
        }
        assert_abs_diff_eq!(g.spacing[0], 1.0);
    }

    #[test]
    fn excluded_voxel_values_never_reach_statistics() {
        // Same mask, wildly different excluded intensities: the included
        // value stream must be identical.
        let grid = GridSpec::axis_aligned([6, 6, 3], [1.0; 3], [0.0; 3]).unwrap();
        let mut m = Volume::filled(grid.clone(), 0.0);
        for j in 2..4 {
            for i in 2..4 {
                for k in 0..3 {
                    m.set(i, j, k, 1.0);
                }
            }
        }
        let mask = RoiMask::new(m).unwrap();
        let mut a = Volume::filled(grid.clone(), 5.0);
        let mut b = Volume::filled(grid, 5.0);
        for k in 0..3 {
            for j in 0..6 {
                for i in 0..6 {
                    if !mask.is_included(i, j, k) {
                        a.set(i, j, k, 1e9);
                        b.set(i, j, k, -1e9);
                    }
                }
            }
        }
        let ma = apply_roi(a, mask.clone()).unwrap();
        let mb = apply_roi(b, mask).unwrap();
        for k in 0..3 {
            let va: Vec<f32> = ma.slice_values(k).collect();
            let vb: Vec<f32> = mb.slice_values(k).collect();
            assert_eq!(va, vb);
        }
    }
}
