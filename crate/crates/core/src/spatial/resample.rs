//! Regridding volumes through world-space transforms.

use rayon::prelude::*;

use crate::error::Result;
use crate::spatial::interp::Interpolator;
use crate::spatial::transform::AffineTransform;
use crate::volume::{GridSpec, Volume};

/// Resample `source` onto `target`, where `transform` is the forward map
/// carrying source content into the target frame.
///
/// Each target voxel center is pulled back through `transform.invert()`
/// into the source frame and sampled there, so the returned volume shows
/// the source as moved by `transform`. Voxels that pull back outside the
/// source grid get `fill`.
pub fn resample(
    source: &Volume,
    transform: &AffineTransform,
    target: &GridSpec,
    interp: &dyn Interpolator,
    fill: f32,
) -> Result<Volume> {
    // target index -> source continuous index, as one matrix.
    let pullback = source
        .grid
        .world_to_voxel()
        .compose(&transform.invert()?)
        .compose(target.voxel_to_world());

    let [nx, ny, _] = target.dims;
    let plane = nx * ny;
    let mut data = vec![0.0f32; target.voxel_count()];
    data.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..ny {
            for i in 0..nx {
                let src_idx = pullback.apply([i as f64, j as f64, k as f64]);
                slab[i + nx * j] = interp.sample_index(source, src_idx, fill);
            }
        }
    });
    Volume::new(target.clone(), data)
}

/// Resample without motion: regrid `source` onto `target` in place.
pub fn regrid(
    source: &Volume,
    target: &GridSpec,
    interp: &dyn Interpolator,
    fill: f32,
) -> Result<Volume> {
    resample(source, &AffineTransform::identity(), target, interp, fill)
}
