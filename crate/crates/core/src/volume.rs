//! In-memory scalar volumes on regular grids.

use crate::error::{Error, Result};
use crate::spatial::transform::AffineTransform;

/// Grid geometry without the sample data: dimensions, spacing, and the
/// voxel-index to world-mm map (with its cached inverse).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    voxel_to_world: AffineTransform,
    world_to_voxel: AffineTransform,
}

impl GridSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], voxel_to_world: AffineTransform) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "grid dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {spacing:?}"
            )));
        }
        let world_to_voxel = voxel_to_world.invert()?;
        Ok(GridSpec {
            dims,
            spacing,
            voxel_to_world,
            world_to_voxel,
        })
    }

    /// Axis-aligned grid with world axes parallel to index axes: world =
    /// index * spacing + origin. Origin is the world position of voxel
    /// (0,0,0)'s center.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let rows = [
            [spacing[0], 0.0, 0.0, origin[0]],
            [0.0, spacing[1], 0.0, origin[1]],
            [0.0, 0.0, spacing[2], origin[2]],
            [0.0, 0.0, 0.0, 1.0],
        ];
        GridSpec::new(dims, spacing, AffineTransform::from_rows(rows)?)
    }

    pub fn voxel_to_world(&self) -> &AffineTransform {
        &self.voxel_to_world
    }

    pub fn world_to_voxel(&self) -> &AffineTransform {
        &self.world_to_voxel
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// World position of a voxel center; indices may be fractional.
    pub fn index_to_world(&self, idx: [f64; 3]) -> [f64; 3] {
        self.voxel_to_world.apply(idx)
    }

    /// Continuous voxel coordinates of a world point.
    pub fn world_to_index(&self, world: [f64; 3]) -> [f64; 3] {
        self.world_to_voxel.apply(world)
    }

    /// World center of the grid's bounding box (through voxel centers).
    pub fn world_center(&self) -> [f64; 3] {
        self.index_to_world([
            (self.dims[0] as f64 - 1.0) / 2.0,
            (self.dims[1] as f64 - 1.0) / 2.0,
            (self.dims[2] as f64 - 1.0) / 2.0,
        ])
    }
}

/// A scalar volume: grid geometry plus one f32 sample per voxel in
/// Hounsfield units, stored x-fastest: `data[i + nx*(j + ny*k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: GridSpec,
    pub data: Vec<f32>,
    /// Optional (min, max) HU hint carried from acquisition metadata.
    pub intensity_range_hint: Option<(f32, f32)>,
}

impl Volume {
    pub fn new(grid: GridSpec, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid.voxel_count() {
            return Err(Error::GridMismatch(format!(
                "data length {} does not match dims {:?} ({} voxels)",
                data.len(),
                grid.dims,
                grid.voxel_count()
            )));
        }
        Ok(Volume {
            grid,
            data,
            intensity_range_hint: None,
        })
    }

    /// Volume of a constant value.
    pub fn filled(grid: GridSpec, value: f32) -> Self {
        let n = grid.voxel_count();
        Volume {
            grid,
            data: vec![value; n],
            intensity_range_hint: None,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing
    }

    #[inline]
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.grid.dims;
        i + nx * (j + ny * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.flat_index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f32) {
        let idx = self.flat_index(i, j, k);
        self.data[idx] = v;
    }

    /// Samples of the axial plane at index k, as a borrowed slice.
    pub fn slice_z(&self, k: usize) -> &[f32] {
        let [nx, ny, nz] = self.grid.dims;
        assert!(k < nz, "slice index {k} out of range 0..{nz}");
        let plane = nx * ny;
        &self.data[k * plane..(k + 1) * plane]
    }

    pub fn index_to_world(&self, idx: [f64; 3]) -> [f64; 3] {
        self.grid.index_to_world(idx)
    }

    pub fn world_to_index(&self, world: [f64; 3]) -> [f64; 3] {
        self.grid.world_to_index(world)
    }

    /// Min and max sample values; None for an all-NaN volume.
    pub fn value_range(&self) -> Option<(f32, f32)> {
        let mut min = f32::INFINITY;
        let mut max = f32::NEG_INFINITY;
        for &v in &self.data {
            if v.is_nan() {
                continue;
            }
            min = min.min(v);
            max = max.max(v);
        }
        (min <= max).then_some((min, max))
    }
}
