//! Synthetic CT phantoms with known electrode geometry.
//!
//! A phantom is an ellipsoidal skull shell around uniform brain tissue,
//! with one or two constant-intensity electrode capsules and optional
//! additive Gaussian noise. Ground truth is constructed analytically:
//! the exact line-plane intersection for every axial slice an electrode
//! crosses. Noise is counter-based (keyed by seed and voxel index), so
//! volumes are bit-identical regardless of the parallel schedule.

use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::splitmix;
use crate::segmentation::Side;
use crate::spatial::{resample, AffineTransform, Trilinear};
use crate::validation::{GroundTruth, GroundTruthEntry};
use crate::volume::{GridSpec, Volume};

/// Version tag for phantom spec JSON files.
pub const PHANTOM_SCHEMA: u32 = 1;

/// Fill value for voxels a perturbation pulls in from outside the
/// volume: air on the CT scale.
pub const BACKGROUND_FILL_HU: f32 = -1024.0;

/// Default electrode capsule radius. At the default 1.45 mm grid, a
/// radius must exceed the worst in-plane distance from a line to the
/// nearest voxel center (spacing / sqrt(2), about 1.03 mm) or some
/// slices contain no electrode voxel at all; 1.2 mm guarantees every
/// crossed slice at least one member and keeps the slice centroid
/// within half a voxel of the true line.
pub const DEFAULT_ELECTRODE_RADIUS_MM: f64 = 1.2;

/// Ellipsoidal bone shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkullShell {
    pub center: [f64; 3],
    pub radii: [f64; 3],
    pub thickness: f64,
    pub intensity: f32,
}

impl Default for SkullShell {
    fn default() -> Self {
        SkullShell {
            center: [0.0; 3],
            radii: [100.0, 110.0, 105.0],
            thickness: 6.0,
            intensity: 1500.0,
        }
    }
}

/// One electrode: a capsule of the given radius around the tip-entry
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElectrodeSpec {
    pub tip: [f64; 3],
    pub entry: [f64; 3],
    pub radius: f64,
    pub intensity: f32,
}

impl Default for ElectrodeSpec {
    fn default() -> Self {
        ElectrodeSpec {
            tip: [-11.0, -6.0, -43.0],
            entry: [-26.0, 16.0, 30.8],
            radius: DEFAULT_ELECTRODE_RADIUS_MM,
            intensity: 3000.0,
        }
    }
}

impl ElectrodeSpec {
    /// The same electrode reflected about the sagittal midplane.
    pub fn mirrored_x(&self, center_x: f64) -> Self {
        let mut m = *self;
        m.tip[0] = 2.0 * center_x - self.tip[0];
        m.entry[0] = 2.0 * center_x - self.entry[0];
        m
    }
}

/// Complete phantom description. The volume is centered on the world
/// origin; the default bilateral electrode pair spans 73.8 mm axially
/// and stays inside the default atlas corridor on every slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub skull: SkullShell,
    pub brain_intensity: f32,
    pub background: f32,
    pub electrodes: Vec<ElectrodeSpec>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub supersample: bool,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        let left = ElectrodeSpec::default();
        let right = left.mirrored_x(0.0);
        PhantomSpec {
            dims: [192, 192, 180],
            spacing: [1.45; 3],
            skull: SkullShell::default(),
            brain_intensity: 40.0,
            background: -1024.0,
            electrodes: vec![left, right],
            noise_sigma: 15.0,
            seed: 42,
            supersample: false,
        }
    }
}

impl PhantomSpec {
    /// The intensity ladder must be strictly ordered or segmentation
    /// has nothing to separate.
    // Negated comparisons reject NaN; the inverted forms would accept it.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.dims.iter().any(|&d| d < 2) {
            return bad(format!("phantom dims must be at least 2, got {:?}", self.dims));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return bad(format!(
                "phantom spacing must be finite and positive, got {:?}",
                self.spacing
            ));
        }
        if self.skull.radii.iter().any(|&r| !(r.is_finite() && r > 0.0)) {
            return bad(format!("skull radii must be positive, got {:?}", self.skull.radii));
        }
        let min_radius = self.skull.radii.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(self.skull.thickness > 0.0 && self.skull.thickness < min_radius) {
            return bad(format!(
                "skull thickness {} must lie in (0, {min_radius})",
                self.skull.thickness
            ));
        }
        if !(self.background < self.brain_intensity) {
            return bad(format!(
                "background {} must be below brain intensity {}",
                self.background, self.brain_intensity
            ));
        }
        if !(self.brain_intensity < self.skull.intensity) {
            return bad(format!(
                "brain intensity {} must be below skull intensity {}",
                self.brain_intensity, self.skull.intensity
            ));
        }
        if self.electrodes.is_empty() {
            return bad("phantom needs at least one electrode".into());
        }
        if self.electrodes.len() > 2 {
            return bad(format!(
                "at most two electrodes (one per side), got {}",
                self.electrodes.len()
            ));
        }
        for e in &self.electrodes {
            if !(e.radius.is_finite() && e.radius > 0.0) {
                return bad(format!("electrode radius must be positive, got {}", e.radius));
            }
            if !(e.intensity > self.skull.intensity) {
                return bad(format!(
                    "electrode intensity {} must exceed skull intensity {}",
                    e.intensity, self.skull.intensity
                ));
            }
            if e.tip.iter().chain(&e.entry).any(|c| !c.is_finite()) {
                return bad("electrode endpoints must be finite".into());
            }
            if e.entry[2] == e.tip[2] {
                return bad("electrode tip and entry must differ in z".into());
            }
        }
        if self.electrodes.len() == 2 {
            let sides: Vec<Side> = self
                .electrodes
                .iter()
                .map(|e| electrode_side(e, self.skull.center[0]))
                .collect();
            if sides[0] == sides[1] {
                return bad(format!(
                    "both electrodes are on the {} side; ground truth needs one per side",
                    sides[0]
                ));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }

    /// Axis-aligned grid centered on the world origin.
    pub fn grid(&self) -> Result<GridSpec> {
        let origin = [
            -0.5 * (self.dims[0] - 1) as f64 * self.spacing[0],
            -0.5 * (self.dims[1] - 1) as f64 * self.spacing[1],
            -0.5 * (self.dims[2] - 1) as f64 * self.spacing[2],
        ];
        GridSpec::axis_aligned(self.dims, self.spacing, origin)
    }
}

fn electrode_side(e: &ElectrodeSpec, center_x: f64) -> Side {
    let mid_x = 0.5 * (e.tip[0] + e.entry[0]);
    if mid_x < center_x {
        Side::Left
    } else {
        Side::Right
    }
}

struct Capsule {
    tip: Vector3<f64>,
    axis: Vector3<f64>,
    len_sq: f64,
    radius_sq: f64,
    z_lo: f64,
    z_hi: f64,
    intensity: f32,
}

impl Capsule {
    fn new(e: &ElectrodeSpec) -> Self {
        let tip = Vector3::from(e.tip);
        let entry = Vector3::from(e.entry);
        let axis = entry - tip;
        Capsule {
            tip,
            axis,
            len_sq: axis.norm_squared(),
            radius_sq: e.radius * e.radius,
            z_lo: e.tip[2].min(e.entry[2]) - e.radius,
            z_hi: e.tip[2].max(e.entry[2]) + e.radius,
            intensity: e.intensity,
        }
    }

    fn contains(&self, p: Vector3<f64>) -> bool {
        let rel = p - self.tip;
        let t = (rel.dot(&self.axis) / self.len_sq).clamp(0.0, 1.0);
        (rel - self.axis * t).norm_squared() <= self.radius_sq
    }
}

/// Standard normal deviate keyed by (seed, counter); independent of
/// evaluation order.
fn unit_normal(seed: u64, counter: u64) -> f64 {
    let a = splitmix(seed, 2 * counter);
    let b = splitmix(seed, 2 * counter + 1);
    let u1 = ((a >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (b >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Offsets for 2x supersampling: the centers of a voxel's octants.
const SUBSAMPLE_OFFSETS: [[f64; 3]; 8] = [
    [-0.25, -0.25, -0.25],
    [0.25, -0.25, -0.25],
    [-0.25, 0.25, -0.25],
    [0.25, 0.25, -0.25],
    [-0.25, -0.25, 0.25],
    [0.25, -0.25, 0.25],
    [-0.25, 0.25, 0.25],
    [0.25, 0.25, 0.25],
];

/// Render the phantom and its analytic ground truth.
///
/// Membership priority per sample point: electrode, then skull shell,
/// then brain (inside the shell), then background. Ground truth holds
/// the exact line-plane intersection for every slice each electrode
/// crosses, labeled by which side of the skull center the electrode
/// lies on.
pub fn generate(spec: &PhantomSpec) -> Result<(Volume, GroundTruth)> {
    spec.validate()?;
    let grid = spec.grid()?;
    let [nx, ny, nz] = spec.dims;

    for e in &spec.electrodes {
        for (name, p) in [("tip", e.tip), ("entry", e.entry)] {
            let idx = grid.world_to_index(p);
            let inside = idx
                .iter()
                .zip(spec.dims)
                .all(|(&c, d)| c >= 0.0 && c <= (d - 1) as f64);
            if !inside {
                return Err(Error::InvalidParameter(format!(
                    "electrode {name} {p:?} lies outside the phantom volume"
                )));
            }
        }
    }

    let capsules: Vec<Capsule> = spec.electrodes.iter().map(Capsule::new).collect();
    let skull_center = Vector3::from(spec.skull.center);
    let outer = Vector3::from(spec.skull.radii);
    let inner = outer.map(|r| r - spec.skull.thickness);

    let classify = |p: Vector3<f64>, caps: &[&Capsule]| -> f32 {
        for c in caps {
            if c.contains(p) {
                return c.intensity;
            }
        }
        let rel = p - skull_center;
        let outer_m = (rel.component_div(&outer)).norm_squared();
        if outer_m > 1.0 {
            spec.background
        } else if (rel.component_div(&inner)).norm_squared() > 1.0 {
            spec.skull.intensity
        } else {
            spec.brain_intensity
        }
    };

    let mut vol = Volume::filled(grid.clone(), 0.0);
    let plane = nx * ny;
    let half_z = 0.5 * spec.spacing[2];
    vol.data
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(k, slab)| {
            let z = grid.index_to_world([0.0, 0.0, k as f64])[2];
            // Capsules that cannot touch this slice are skipped whole.
            let near: Vec<&Capsule> = capsules
                .iter()
                .filter(|c| z + half_z >= c.z_lo && z - half_z <= c.z_hi)
                .collect();
            for j in 0..ny {
                for i in 0..nx {
                    let idx = [i as f64, j as f64, k as f64];
                    let base = if spec.supersample {
                        let mut sum = 0.0f64;
                        for off in SUBSAMPLE_OFFSETS {
                            let sub = [idx[0] + off[0], idx[1] + off[1], idx[2] + off[2]];
                            sum += f64::from(classify(
                                Vector3::from(grid.index_to_world(sub)),
                                &near,
                            ));
                        }
                        (sum / 8.0) as f32
                    } else {
                        classify(Vector3::from(grid.index_to_world(idx)), &near)
                    };
                    let flat = i + nx * (j + ny * k);
                    slab[i + nx * j] = if spec.noise_sigma > 0.0 {
                        (f64::from(base)
                            + spec.noise_sigma * unit_normal(spec.seed, flat as u64))
                            as f32
                    } else {
                        base
                    };
                }
            }
        });
    vol.intensity_range_hint = vol.value_range();

    let mut entries = Vec::new();
    for e in &spec.electrodes {
        let label = electrode_side(e, spec.skull.center[0]);
        let (lo, hi) = (e.tip[2].min(e.entry[2]), e.tip[2].max(e.entry[2]));
        let dz = e.entry[2] - e.tip[2];
        for k in 0..nz {
            let z = grid.index_to_world([0.0, 0.0, k as f64])[2];
            if z < lo || z > hi {
                continue;
            }
            let t = (z - e.tip[2]) / dz;
            entries.push(GroundTruthEntry {
                slice_index: k,
                label,
                position: [
                    e.tip[0] + t * (e.entry[0] - e.tip[0]),
                    e.tip[1] + t * (e.entry[1] - e.tip[1]),
                    z,
                ],
            });
        }
    }
    entries.sort_by_key(|e| (e.slice_index, e.label == Side::Right));
    Ok((vol, GroundTruth::new(entries)?))
}

/// Apply a known rigid motion and return both the moved volume and the
/// exact transform that was applied (rotation about the volume's world
/// center, Euler angles in degrees). Voxels pulled in from outside are
/// air.
pub fn perturb(
    v: &Volume,
    translation_mm: [f64; 3],
    rotation_deg: [f64; 3],
) -> Result<(Volume, AffineTransform)> {
    if rotation_deg.iter().any(|a| !(a.is_finite() && a.abs() <= 30.0)) {
        return Err(Error::InvalidParameter(format!(
            "rotation angles must be within +/-30 degrees, got {rotation_deg:?}"
        )));
    }
    if translation_mm.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(
            "translation must be finite".into(),
        ));
    }
    let angles = rotation_deg.map(f64::to_radians);
    let transform = AffineTransform::rigid(v.grid.world_center(), angles, translation_mm);
    let moved = resample(v, &transform, &v.grid, &Trilinear, BACKGROUND_FILL_HU)?;
    Ok((moved, transform))
}

#[derive(Serialize, Deserialize)]
struct PhantomFile {
    schema: u32,
    #[serde(flatten)]
    spec: PhantomSpec,
}

/// Write a phantom spec as schema-versioned JSON.
pub fn write_phantom_json(spec: &PhantomSpec, path: &Path) -> Result<()> {
    spec.validate()?;
    let file = PhantomFile {
        schema: PHANTOM_SCHEMA,
        spec: spec.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::format(path, format!("serialize: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a phantom spec; missing fields take their defaults.
pub fn read_phantom_json(path: &Path) -> Result<PhantomSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PhantomFile =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if file.schema != PHANTOM_SCHEMA {
        return Err(Error::format(
            path,
            format!(
                "unsupported phantom schema {} (expected {PHANTOM_SCHEMA})",
                file.schema
            ),
        ));
    }
    file.spec.validate()?;
    Ok(file.spec)
}
