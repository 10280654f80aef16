//! Multi-resolution pyramid. Each level halves every axis by averaging
//! 2x2x2 blocks; truncated edge blocks average whatever exists. The new
//! grid's voxel (i,j,k) sits at fractional index (2i+0.5, 2j+0.5, 2k+0.5)
//! of its parent, so world geometry carries through exactly.

use crate::spatial::AffineTransform;
use crate::volume::{GridSpec, Volume};

/// Axes of the coarsest level never drop below this many voxels; requested
/// levels beyond that point are not built.
const MIN_AXIS_VOXELS: usize = 8;

/// Levels ordered fine to coarse; index 0 is the input itself. Always
/// nonempty, with at most `levels` entries.
pub fn build_pyramid(volume: &Volume, levels: usize) -> Vec<Volume> {
    let mut out = vec![volume.clone()];
    while out.len() < levels {
        let prev = out.last().expect("nonempty");
        if prev.grid.dims.iter().any(|&n| n < 2 * MIN_AXIS_VOXELS) {
            break;
        }
        out.push(downsample(prev));
    }
    out
}

fn downsample(v: &Volume) -> Volume {
    let [nx, ny, nz] = v.grid.dims;
    let dims = [nx.div_ceil(2), ny.div_ceil(2), nz.div_ceil(2)];
    let spacing = [
        v.grid.spacing[0] * 2.0,
        v.grid.spacing[1] * 2.0,
        v.grid.spacing[2] * 2.0,
    ];
    let block_map = AffineTransform::from_rows([
        [2.0, 0.0, 0.0, 0.5],
        [0.0, 2.0, 0.0, 0.5],
        [0.0, 0.0, 2.0, 0.5],
        [0.0, 0.0, 0.0, 1.0],
    ])
    .expect("constant matrix");
    let voxel_to_world = v.grid.voxel_to_world().compose(&block_map);
    let grid = GridSpec::new(dims, spacing, voxel_to_world).expect("positive dims");

    let mut data = Vec::with_capacity(grid.voxel_count());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let mut sum = 0.0f64;
                let mut members = 0u32;
                for dk in 0..2 {
                    let sk = 2 * k + dk;
                    if sk >= nz {
                        continue;
                    }
                    for dj in 0..2 {
                        let sj = 2 * j + dj;
                        if sj >= ny {
                            continue;
                        }
                        for di in 0..2 {
                            let si = 2 * i + di;
                            if si >= nx {
                                continue;
                            }
                            sum += v.get(si, sj, sk) as f64;
                            members += 1;
                        }
                    }
                }
                data.push((sum / members as f64) as f32);
            }
        }
    }
    Volume::new(grid, data).expect("dims match data")
}
