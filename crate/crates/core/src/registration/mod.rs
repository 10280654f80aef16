//! Intensity-based alignment of a moving volume onto a fixed volume's grid:
//! coarse-to-fine pyramid, derivative-free coordinate descent over a
//! transform model, similarity from subsampled intensity pairs. The returned
//! transform maps fixed-volume world coordinates into moving-volume world
//! coordinates.

pub mod metric;
pub mod model;
mod optimize;
mod pyramid;

use rayon::prelude::*;

pub use metric::{metric_from_name, metric_names, Ncc, SampleMoments, SimilarityMetric, Ssd};
pub use model::{model_from_name, model_names, AffineModel, RigidModel, TransformModel};
pub use optimize::{coordinate_descent, OptimizeOutcome};
pub use pyramid::build_pyramid;

use crate::error::{Error, Result};
use crate::rng::{centered_unit, splitmix};
use crate::spatial::interp::trilinear_at_index;
use crate::spatial::AffineTransform;
use crate::volume::Volume;

/// Metric evaluations with fewer overlapping samples than this are unusable.
pub const MIN_OVERLAP_SAMPLES: usize = 100;

#[derive(Debug, Clone)]
pub struct RegistrationConfig {
    /// Similarity metric name; see [`metric_names`].
    pub metric: String,
    /// Resolution levels, each a 2x downsample of the previous.
    pub pyramid_levels: usize,
    pub max_iterations_per_level: usize,
    /// Optimizer stops once every parameter step shrinks below this.
    pub parameter_tolerance: f64,
    /// Applied inside every candidate, so optimization refines it.
    pub initial_transform: AffineTransform,
    /// Fraction of fixed voxels sampled for the metric, via a deterministic
    /// flat-index stride of round(1/fraction).
    pub sample_fraction: f64,
    /// Seed for the in-cell sample jitter. Two runs with the same seed are
    /// bit-identical; the default reproduces [`similarity`]'s sampling.
    pub sample_seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            metric: "ncc".into(),
            pyramid_levels: 3,
            max_iterations_per_level: 100,
            parameter_tolerance: 1e-4,
            initial_transform: AffineTransform::identity(),
            sample_fraction: 0.25,
            sample_seed: DEFAULT_SAMPLE_SEED,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        metric_from_name(&self.metric)?;
        if self.pyramid_levels == 0 {
            return Err(Error::InvalidParameter(
                "pyramid_levels must be at least 1".into(),
            ));
        }
        if self.max_iterations_per_level == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations_per_level must be at least 1".into(),
            ));
        }
        if !self.parameter_tolerance.is_finite() || self.parameter_tolerance <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "parameter_tolerance {} must be positive",
                self.parameter_tolerance
            )));
        }
        if !self.sample_fraction.is_finite()
            || self.sample_fraction <= 0.0
            || self.sample_fraction > 1.0
        {
            return Err(Error::InvalidParameter(format!(
                "sample_fraction {} must lie in (0, 1]",
                self.sample_fraction
            )));
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        ((1.0 / self.sample_fraction).round() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub transform: AffineTransform,
    /// False when any pyramid level hit its iteration cap before the step
    /// sizes shrank below tolerance; the transform is still the best found.
    pub converged: bool,
    /// Metric score of the final transform at the finest level's sampling.
    pub metric_value: f64,
    /// Total optimizer passes across all levels.
    pub iterations: usize,
}

/// Score how well `t` maps fixed-grid content onto `moving`, sampling every
/// fixed voxel. Samples landing outside `moving` are excluded.
pub fn similarity(
    fixed: &Volume,
    moving: &Volume,
    t: &AffineTransform,
    metric: &dyn SimilarityMetric,
) -> Result<f64> {
    let m = transform_moments(fixed, moving, t, 1, DEFAULT_SAMPLE_SEED);
    if m.count() < MIN_OVERLAP_SAMPLES {
        return Err(Error::InsufficientOverlap {
            found: m.count(),
            required: MIN_OVERLAP_SAMPLES,
        });
    }
    Ok(metric.score(&m))
}

/// Recover a 6-parameter rigid motion (translation mm, Euler rotation about
/// the fixed volume's world center) aligning `moving` to `fixed`.
pub fn register_rigid(
    fixed: &Volume,
    moving: &Volume,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    register_with_model(fixed, moving, &RigidModel, &cfg.initial_transform, cfg)
}

/// Refine `init` with a 12-parameter affine correction. The result never
/// scores worse than `init` under the configured metric and sampling.
pub fn register_affine(
    fixed: &Volume,
    moving: &Volume,
    init: &AffineTransform,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    register_with_model(fixed, moving, &AffineModel, init, cfg)
}

fn register_with_model(
    fixed: &Volume,
    moving: &Volume,
    model: &dyn TransformModel,
    init: &AffineTransform,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    let metric = metric_from_name(&cfg.metric)?;
    let stride = cfg.stride();
    let fixed_pyramid = build_pyramid(fixed, cfg.pyramid_levels);
    let moving_pyramid = build_pyramid(moving, cfg.pyramid_levels);
    let levels = fixed_pyramid.len().min(moving_pyramid.len());
    let center = fixed.grid.world_center();

    let mut params = vec![0.0; model.parameter_count()];
    let mut converged = true;
    let mut iterations = 0;
    let mut value = f64::INFINITY;
    for level in (0..levels).rev() {
        let f = &fixed_pyramid[level];
        let m = &moving_pyramid[level];
        if level == levels - 1 {
            let t0 = model.to_transform(&params, center).compose(init);
            let moments = transform_moments(f, m, &t0, stride, cfg.sample_seed);
            if moments.count() < MIN_OVERLAP_SAMPLES {
                return Err(Error::InsufficientOverlap {
                    found: moments.count(),
                    required: MIN_OVERLAP_SAMPLES,
                });
            }
        }
        let eval = |p: &[f64]| -> f64 {
            let t = model.to_transform(p, center).compose(init);
            let moments = transform_moments(f, m, &t, stride, cfg.sample_seed);
            if moments.count() < MIN_OVERLAP_SAMPLES {
                f64::INFINITY
            } else {
                metric.score(&moments)
            }
        };
        let out = coordinate_descent(
            &params,
            &model.initial_steps(),
            cfg.parameter_tolerance,
            cfg.max_iterations_per_level,
            eval,
        );
        params = out.params;
        converged &= out.converged;
        iterations += out.iterations;
        value = out.value;
    }

    // The optimizer starts each level from the previous best, but levels
    // score on different samplings; guarantee the final answer is no worse
    // than the initial transform under the finest-level sampling.
    let finest_f = &fixed_pyramid[0];
    let finest_m = &moving_pyramid[0];
    let at_init = {
        let zeros = vec![0.0; model.parameter_count()];
        let t = model.to_transform(&zeros, center).compose(init);
        let moments = transform_moments(finest_f, finest_m, &t, stride, cfg.sample_seed);
        if moments.count() < MIN_OVERLAP_SAMPLES {
            f64::INFINITY
        } else {
            metric.score(&moments)
        }
    };
    if at_init < value {
        params = vec![0.0; model.parameter_count()];
        value = at_init;
        converged = false;
    }

    Ok(RegistrationResult {
        transform: model.to_transform(&params, center).compose(init),
        converged,
        metric_value: value,
        iterations,
    })
}

/// Accumulate (fixed, moving) pairs over every `stride`-th fixed voxel in
/// flat order, pulling moving values through `t` with trilinear sampling.
/// NaN marks an outside sample and is excluded.
///
/// Each sample point is jittered inside its voxel cell by a hash of the
/// voxel's flat index, so both volumes are read through interpolation at
/// every candidate pose. Without the jitter, poses that land samples exactly
/// on moving-grid voxel centers (identity above all) skip the interpolation
/// smoothing that every other pose pays, which carves a spurious metric
/// minimum at grid-aligned poses strong enough to mask small true motions.
fn transform_moments(
    fixed: &Volume,
    moving: &Volume,
    t: &AffineTransform,
    stride: usize,
    seed: u64,
) -> SampleMoments {
    let map = moving
        .grid
        .world_to_voxel()
        .compose(t)
        .compose(fixed.grid.voxel_to_world());
    let [nx, ny, _] = fixed.grid.dims;
    let plane = nx * ny;
    let samples = fixed.grid.voxel_count().div_ceil(stride);
    // Partial sums are accumulated over fixed chunk boundaries and merged
    // in chunk order, so the floating-point result is independent of the
    // thread schedule and of the worker count.
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let partials: Vec<SampleMoments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = SampleMoments::default();
            let lo = c * SAMPLE_CHUNK;
            let hi = samples.min(lo + SAMPLE_CHUNK);
            for s in lo..hi {
                let flat = s * stride;
                let k = flat / plane;
                let rem = flat % plane;
                let pos = [
                    (rem % nx) as f64 + centered_unit(splitmix(seed, 3 * flat as u64)),
                    (rem / nx) as f64 + centered_unit(splitmix(seed, 3 * flat as u64 + 1)),
                    k as f64 + centered_unit(splitmix(seed, 3 * flat as u64 + 2)),
                ];
                let f_value = trilinear_at_index(fixed, pos, f32::NAN);
                if f_value.is_nan() {
                    continue;
                }
                let m_value = trilinear_at_index(moving, map.apply(pos), f32::NAN);
                if !m_value.is_nan() {
                    acc.push(f_value as f64, m_value as f64);
                }
            }
            acc
        })
        .collect();
    let mut total = SampleMoments::default();
    for p in &partials {
        total.merge(p);
    }
    total
}

/// Samples per parallel work unit in `transform_moments`.
const SAMPLE_CHUNK: usize = 4096;

/// Default key for the sample jitter; [`similarity`] always uses it, so a
/// metric value is a well-defined function of its inputs.
pub const DEFAULT_SAMPLE_SEED: u64 = 0x7d0c_a272_36b5_91f3;
