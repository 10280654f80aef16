//! Transform parameterizations searched by the optimizer. A model maps a
//! flat parameter vector to a world-space transform pivoting at the fixed
//! volume's center; the zero vector always maps to identity.

use crate::error::{Error, Result};
use crate::spatial::AffineTransform;

/// Parameterized family of transforms, selected by name at runtime; see
/// [`model_from_name`].
pub trait TransformModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn parameter_count(&self) -> usize;

    /// Natural starting step per parameter: mm for translations, radians for
    /// rotations, dimensionless for linear-block entries.
    fn initial_steps(&self) -> Vec<f64>;

    fn to_transform(&self, params: &[f64], center: [f64; 3]) -> AffineTransform;
}

/// Six parameters: [tx, ty, tz] mm then [rx, ry, rz] radians about the pivot.
pub struct RigidModel;

/// Twelve parameters: nine row-major additive deltas on the linear block,
/// then [tx, ty, tz] mm. The block (I + D) acts about the pivot.
pub struct AffineModel;

impl TransformModel for RigidModel {
    fn name(&self) -> &'static str {
        "rigid"
    }

    fn parameter_count(&self) -> usize {
        6
    }

    fn initial_steps(&self) -> Vec<f64> {
        vec![2.0, 2.0, 2.0, 0.03, 0.03, 0.03]
    }

    fn to_transform(&self, params: &[f64], center: [f64; 3]) -> AffineTransform {
        assert_eq!(params.len(), 6);
        AffineTransform::rigid(
            center,
            [params[3], params[4], params[5]],
            [params[0], params[1], params[2]],
        )
    }
}

impl TransformModel for AffineModel {
    fn name(&self) -> &'static str {
        "affine"
    }

    fn parameter_count(&self) -> usize {
        12
    }

    fn initial_steps(&self) -> Vec<f64> {
        let mut steps = vec![0.01; 9];
        steps.extend_from_slice(&[1.0, 1.0, 1.0]);
        steps
    }

    fn to_transform(&self, params: &[f64], center: [f64; 3]) -> AffineTransform {
        assert_eq!(params.len(), 12);
        let d = &params[..9];
        let linear = [
            [1.0 + d[0], d[1], d[2]],
            [d[3], 1.0 + d[4], d[5]],
            [d[6], d[7], 1.0 + d[8]],
        ];
        // x' = L (x - c) + c + t, written as one homogeneous matrix.
        let mut rows = [[0.0; 4]; 4];
        for r in 0..3 {
            rows[r][..3].copy_from_slice(&linear[r]);
            let lc: f64 = (0..3).map(|c| linear[r][c] * center[c]).sum();
            rows[r][3] = center[r] - lc + params[9 + r];
        }
        rows[3][3] = 1.0;
        AffineTransform::from_rows(rows).expect("finite entries")
    }
}

/// Look up a transform model by its registered name.
pub fn model_from_name(name: &str) -> Result<Box<dyn TransformModel>> {
    match name {
        "rigid" => Ok(Box::new(RigidModel)),
        "affine" => Ok(Box::new(AffineModel)),
        other => Err(Error::InvalidParameter(format!(
            "unknown transform model '{other}' (available: rigid, affine)"
        ))),
    }
}

/// Names accepted by [`model_from_name`].
pub fn model_names() -> &'static [&'static str] {
    &["rigid", "affine"]
}
