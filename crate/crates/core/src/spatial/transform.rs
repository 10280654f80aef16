//! Homogeneous 4x4 world-space transforms.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinant magnitude below which a linear part is treated as singular.
const SINGULAR_EPS: f64 = 1e-12;

/// A 4x4 homogeneous affine map over world millimeters.
///
/// The last row is always (0, 0, 0, 1) and the 3x3 linear block is
/// invertible; both are enforced at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    m: Matrix4<f64>,
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform {
            m: Matrix4::identity(),
        }
    }

    /// Wrap a matrix, validating the homogeneous-row and invertibility invariants.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        if m.row(3) != Matrix4::identity().row(3) {
            return Err(Error::InvalidParameter(format!(
                "affine last row must be (0,0,0,1), got ({}, {}, {}, {})",
                m[(3, 0)],
                m[(3, 1)],
                m[(3, 2)],
                m[(3, 3)]
            )));
        }
        let linear = Matrix3::from(m.fixed_view::<3, 3>(0, 0));
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("affine entries must be finite".into()));
        }
        if linear.determinant().abs() < SINGULAR_EPS {
            return Err(Error::SingularTransform(format!(
                "3x3 determinant {:.3e}",
                linear.determinant()
            )));
        }
        Ok(AffineTransform { m })
    }

    /// Build from four rows, row-major.
    pub fn from_rows(rows: [[f64; 4]; 4]) -> Result<Self> {
        Self::from_matrix(Matrix4::from_fn(|r, c| rows[r][c]))
    }

    pub fn translation(t: [f64; 3]) -> Self {
        let mut m = Matrix4::identity();
        m[(0, 3)] = t[0];
        m[(1, 3)] = t[1];
        m[(2, 3)] = t[2];
        AffineTransform { m }
    }

    /// Uniform isotropic scaling about the origin.
    pub fn scaling(s: f64) -> Result<Self> {
        if s == 0.0 || !s.is_finite() {
            return Err(Error::SingularTransform(format!("scale factor {s}")));
        }
        let mut m = Matrix4::identity();
        m[(0, 0)] = s;
        m[(1, 1)] = s;
        m[(2, 2)] = s;
        Ok(AffineTransform { m })
    }

    /// Rotation by Euler angles (radians) about the world axes, applied
    /// x-then-y-then-z, pivoting at `center`.
    pub fn rotation_euler_about(center: [f64; 3], angles: [f64; 3]) -> Self {
        let (sx, cx) = angles[0].sin_cos();
        let (sy, cy) = angles[1].sin_cos();
        let (sz, cz) = angles[2].sin_cos();
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
        let r = rz * ry * rx;
        let c = Vector3::new(center[0], center[1], center[2]);
        let t = c - r * c;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m[(0, 3)] = t[0];
        m[(1, 3)] = t[1];
        m[(2, 3)] = t[2];
        AffineTransform { m }
    }

    /// Rigid motion: rotate about `center`, then translate.
    pub fn rigid(center: [f64; 3], angles: [f64; 3], translation: [f64; 3]) -> Self {
        AffineTransform::translation(translation)
            .compose(&AffineTransform::rotation_euler_about(center, angles))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let mut rows = [[0.0; 4]; 4];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.m[(r, c)];
            }
        }
        rows
    }

    /// Map a world point: matrix * (p, 1), truncated to 3 components.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.m * Vector4::new(p[0], p[1], p[2], 1.0);
        [v[0], v[1], v[2]]
    }

    /// `self` after `other`: apply(compose(a, b), p) == apply(a, apply(b, p)).
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        AffineTransform { m: self.m * other.m }
    }

    pub fn invert(&self) -> Result<AffineTransform> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| Error::SingularTransform("matrix has no inverse".into()))?;
        // Re-pin the homogeneous row; try_inverse can leave it at 1e-17-level dust.
        let mut m = inv;
        m[(3, 0)] = 0.0;
        m[(3, 1)] = 0.0;
        m[(3, 2)] = 0.0;
        m[(3, 3)] = 1.0;
        Ok(AffineTransform { m })
    }

    /// Translation column of the matrix.
    pub fn translation_part(&self) -> [f64; 3] {
        [self.m[(0, 3)], self.m[(1, 3)], self.m[(2, 3)]]
    }

    /// 3x3 linear block.
    pub fn linear_part(&self) -> Matrix3<f64> {
        Matrix3::from(self.m.fixed_view::<3, 3>(0, 0))
    }

    /// Largest absolute entrywise difference between the two matrices.
    pub fn max_abs_diff(&self, other: &AffineTransform) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &AffineTransform, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// Rotation angle (radians) of the linear block, assuming it is a rotation.
    pub fn rotation_angle(&self) -> f64 {
        let r = self.linear_part();
        let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Per-axis Euler angles (radians) of the linear block, inverting the
    /// x-then-y-then-z convention of `rotation_euler_about`. Valid while the
    /// block is a rotation away from the |ry| = 90 degree singularity.
    pub fn euler_angles(&self) -> [f64; 3] {
        let r = self.linear_part();
        let ry = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let rx = r[(2, 1)].atan2(r[(2, 2)]);
        let rz = r[(1, 0)].atan2(r[(0, 0)]);
        [rx, ry, rz]
    }
}

/// On-disk JSON form: {"schema": 1, "matrix": [16 reals, row-major]}.
#[derive(Serialize, Deserialize)]
struct TransformFile {
    schema: u32,
    matrix: Vec<f64>,
}

pub const TRANSFORM_SCHEMA: u32 = 1;

pub fn write_transform_json(t: &AffineTransform, path: &Path) -> Result<()> {
    let rows = t.to_rows();
    let file = TransformFile {
        schema: TRANSFORM_SCHEMA,
        matrix: rows.iter().flatten().copied().collect(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::InvalidParameter(format!("transform serialization: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_transform_json(path: &Path) -> Result<AffineTransform> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TransformFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(path, format!("transform JSON: {e}")))?;
    if file.schema != TRANSFORM_SCHEMA {
        return Err(Error::format(
            path,
            format!("transform schema {} (expected {})", file.schema, TRANSFORM_SCHEMA),
        ));
    }
    if file.matrix.len() != 16 {
        return Err(Error::format(
            path,
            format!("transform matrix has {} entries, expected 16", file.matrix.len()),
        ));
    }
    let mut rows = [[0.0; 4]; 4];
    for (r, row) in rows.iter_mut().enumerate() {
        row.copy_from_slice(&file.matrix[r * 4..r * 4 + 4]);
    }
    AffineTransform::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        ((z ^ (z >> 31)) as f64 / u64::MAX as f64) * 2.0 - 1.0
    }

    fn random_rigid(state: &mut u64) -> AffineTransform {
        let angles = [
            splitmix(state) * 0.5,
            splitmix(state) * 0.5,
            splitmix(state) * 0.5,
        ];
        let t = [
            splitmix(state) * 20.0,
            splitmix(state) * 20.0,
            splitmix(state) * 20.0,
        ];
        AffineTransform::rigid([0.0; 3], angles, t)
    }

    #[test]
    fn identity_maps_points_unchanged() {
        let t = AffineTransform::identity();
        assert_eq!(t.apply([3.0, 4.0, 5.0]), [3.0, 4.0, 5.0]);
    }

    #[test]
    fn translation_moves_origin() {
        let t = AffineTransform::translation([1.0, 2.0, 3.0]);
        assert_eq!(t.apply([0.0, 0.0, 0.0]), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = AffineTransform::rotation_euler_about(
            [0.0; 3],
            [0.0, 0.0, std::f64::consts::FRAC_PI_2],
        );
        let p = t.apply([1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut state = 7u64;
        for _ in 0..20 {
            let t = random_rigid(&mut state);
            let round = t.compose(&t.invert().unwrap());
            assert!(round.approx_eq(&AffineTransform::identity(), 1e-9));
        }
    }

    #[test]
    fn compose_identity_is_noop() {
        let mut state = 11u64;
        let b = random_rigid(&mut state);
        assert!(AffineTransform::identity().compose(&b).approx_eq(&b, 0.0));
    }

    #[test]
    fn compose_matches_pointwise_application() {
        // Oracle: apply the two maps one after the other on sample points.
        let mut state = 3u64;
        let a = random_rigid(&mut state);
        let b = random_rigid(&mut state);
        let ab = a.compose(&b);
        for _ in 0..100 {
            let p = [
                splitmix(&mut state) * 100.0,
                splitmix(&mut state) * 100.0,
                splitmix(&mut state) * 100.0,
            ];
            let direct = ab.apply(p);
            let chained = a.apply(b.apply(p));
            for axis in 0..3 {
                assert_abs_diff_eq!(direct[axis], chained[axis], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn invert_translation() {
        let t = AffineTransform::translation([1.0, 0.0, 0.0]);
        let inv = t.invert().unwrap();
        assert!(inv.approx_eq(&AffineTransform::translation([-1.0, 0.0, 0.0]), 1e-12));
    }

    #[test]
    fn invert_identity() {
        let t = AffineTransform::identity().invert().unwrap();
        assert!(t.approx_eq(&AffineTransform::identity(), 0.0));
    }

    #[test]
    fn invert_roundtrips_points() {
        let mut state = 5u64;
        let t = AffineTransform::from_rows([
            [1.2, 0.1, 0.0, 4.0],
            [-0.1, 0.9, 0.05, -2.0],
            [0.0, 0.02, 1.1, 7.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let inv = t.invert().unwrap();
        for _ in 0..100 {
            let p = [
                splitmix(&mut state) * 50.0,
                splitmix(&mut state) * 50.0,
                splitmix(&mut state) * 50.0,
            ];
            let q = inv.apply(t.apply(p));
            for axis in 0..3 {
                assert_abs_diff_eq!(q[axis], p[axis], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let r = AffineTransform::from_rows([
            [1.0, 0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]);
        assert!(matches!(r, Err(Error::SingularTransform(_))));
    }

    #[test]
    fn bad_last_row_rejected() {
        let m = Matrix4::from_fn(|r, c| if r == 3 && c == 0 { 0.5 } else { f64::from(u8::from(r == c)) });
        assert!(matches!(
            AffineTransform::from_matrix(m),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn composition_associative() {
        let mut state = 17u64;
        let a = random_rigid(&mut state);
        let b = random_rigid(&mut state);
        let c = random_rigid(&mut state);
        let left = a.compose(&b.compose(&c));
        let right = a.compose(&b).compose(&c);
        for _ in 0..50 {
            let p = [
                splitmix(&mut state) * 30.0,
                splitmix(&mut state) * 30.0,
                splitmix(&mut state) * 30.0,
            ];
            let lp = left.apply(p);
            let rp = right.apply(p);
            for axis in 0..3 {
                assert_abs_diff_eq!(lp[axis], rp[axis], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let t = AffineTransform::rigid([1.0, 2.0, 3.0], [0.1, -0.2, 0.3], [4.0, 5.0, -6.0]);
        write_transform_json(&t, &path).unwrap();
        let back = read_transform_json(&path).unwrap();
        assert!(t.approx_eq(&back, 1e-15));
    }

    #[test]
    fn json_bad_schema_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        std::fs::write(&path, r#"{"schema": 9, "matrix": [1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1]}"#)
            .unwrap();
        assert!(matches!(read_transform_json(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn euler_angles_invert_construction() {
        let cases = [
            [0.1, -0.2, 0.3],
            [0.0, 0.0, 0.0],
            [-0.4, 0.25, -0.15],
            [0.01, 0.02, -0.03],
        ];
        for angles in cases {
            let t = AffineTransform::rotation_euler_about([5.0, -3.0, 2.0], angles);
            let got = t.euler_angles();
            for axis in 0..3 {
                assert!(
                    (got[axis] - angles[axis]).abs() < 1e-12,
                    "axis {axis}: {} vs {}",
                    got[axis],
                    angles[axis]
                );
            }
        }
    }
}
