//! Sampling a volume at arbitrary points.

use crate::error::{Error, Result};
use crate::volume::Volume;

/// Interpolation strategy. Implementations are selected by name at
/// runtime; see [`interpolator_from_name`].
pub trait Interpolator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Sample at a continuous voxel-index coordinate; outside the closed
    /// index box [0, n-1] per axis returns `fill`.
    fn sample_index(&self, vol: &Volume, idx: [f64; 3], fill: f32) -> f32;

    /// Sample at a world point (mm).
    fn sample_world(&self, vol: &Volume, world: [f64; 3], fill: f32) -> f32 {
        self.sample_index(vol, vol.grid.world_to_index(world), fill)
    }
}

/// Weighted average of the 8 surrounding voxel centers.
pub struct Trilinear;

/// Value of the closest voxel center. Preserves the value set of the
/// input, so binary masks stay binary.
pub struct Nearest;

impl Interpolator for Trilinear {
    fn name(&self) -> &'static str {
        "trilinear"
    }

    fn sample_index(&self, vol: &Volume, idx: [f64; 3], fill: f32) -> f32 {
        trilinear_at_index(vol, idx, fill)
    }
}

impl Interpolator for Nearest {
    fn name(&self) -> &'static str {
        "nearest"
    }

    fn sample_index(&self, vol: &Volume, idx: [f64; 3], fill: f32) -> f32 {
        nearest_at_index(vol, idx, fill)
    }
}

/// Look up an interpolator by its registered name.
pub fn interpolator_from_name(name: &str) -> Result<Box<dyn Interpolator>> {
    match name {
        "trilinear" => Ok(Box::new(Trilinear)),
        "nearest" => Ok(Box::new(Nearest)),
        other => Err(Error::InvalidParameter(format!(
            "unknown interpolator '{other}' (available: trilinear, nearest)"
        ))),
    }
}

/// Names accepted by [`interpolator_from_name`].
pub fn interpolator_names() -> &'static [&'static str] {
    &["trilinear", "nearest"]
}

#[inline]
fn in_range(x: f64, n: usize) -> bool {
    x >= 0.0 && x <= (n - 1) as f64
}

/// Trilinear sample at a world point (mm); outside the grid yields
/// `outside_value`.
pub fn trilinear_sample(vol: &Volume, world: [f64; 3], outside_value: f32) -> f32 {
    trilinear_at_index(vol, vol.grid.world_to_index(world), outside_value)
}

/// Nearest-neighbor sample at a world point (mm); outside yields
/// `outside_value`.
pub fn nearest_sample(vol: &Volume, world: [f64; 3], outside_value: f32) -> f32 {
    nearest_at_index(vol, vol.grid.world_to_index(world), outside_value)
}

/// Trilinear interpolation at a continuous voxel index.
pub fn trilinear_at_index(vol: &Volume, idx: [f64; 3], fill: f32) -> f32 {
    let [nx, ny, nz] = vol.dims();
    if !(in_range(idx[0], nx) && in_range(idx[1], ny) && in_range(idx[2], nz)) {
        return fill;
    }
    let i0 = (idx[0].floor() as usize).min(nx - 1);
    let j0 = (idx[1].floor() as usize).min(ny - 1);
    let k0 = (idx[2].floor() as usize).min(nz - 1);
    let i1 = (i0 + 1).min(nx - 1);
    let j1 = (j0 + 1).min(ny - 1);
    let k1 = (k0 + 1).min(nz - 1);
    let fx = idx[0] - i0 as f64;
    let fy = idx[1] - j0 as f64;
    let fz = idx[2] - k0 as f64;

    let c = |i: usize, j: usize, k: usize| f64::from(vol.get(i, j, k));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;

    let x00 = lerp(c(i0, j0, k0), c(i1, j0, k0), fx);
    let x10 = lerp(c(i0, j1, k0), c(i1, j1, k0), fx);
    let x01 = lerp(c(i0, j0, k1), c(i1, j0, k1), fx);
    let x11 = lerp(c(i0, j1, k1), c(i1, j1, k1), fx);
    let y0 = lerp(x00, x10, fy);
    let y1 = lerp(x01, x11, fy);
    lerp(y0, y1, fz) as f32
}

/// Nearest-neighbor lookup at a continuous voxel index.
pub fn nearest_at_index(vol: &Volume, idx: [f64; 3], fill: f32) -> f32 {
    let [nx, ny, nz] = vol.dims();
    if !(in_range(idx[0], nx) && in_range(idx[1], ny) && in_range(idx[2], nz)) {
        return fill;
    }
    let i = (idx[0].round() as usize).min(nx - 1);
    let j = (idx[1].round() as usize).min(ny - 1);
    let k = (idx[2].round() as usize).min(nz - 1);
    vol.get(i, j, k)
}
