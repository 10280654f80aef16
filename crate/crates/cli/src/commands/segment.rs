//! `dbsloc segment`: the end-to-end localization pipeline. Reads a CT,
//! masks it to the atlas corridor, thresholds each slice adaptively,
//! chains centroids into left/right trajectories, and resamples them to
//! the output resolution.

use std::path::PathBuf;

use clap::Args;
use dbsloc_core::atlas::{apply_roi, default_atlas, rasterize_atlas, read_atlas_json, AtlasBoxStack, RoiMask};
use dbsloc_core::calibrate::DEFAULT_K;
use dbsloc_core::io::read_volume;
use dbsloc_core::mesh::{trajectory_to_mesh, write_ply, TriangleMesh};
use dbsloc_core::segmentation::{segment_volume, AreaFilters, Side};
use dbsloc_core::spatial::transform::read_transform_json;
use dbsloc_core::trajectory::{
    build_trajectory, resample_trajectory, write_trajectory_csv, write_trajectory_json,
    Trajectory, DEFAULT_OUTPUT_SPACING_MM,
};
use dbsloc_core::volume::GridSpec;
use dbsloc_core::{Result, Volume};
use serde::{Deserialize, Serialize};

use crate::config::{self, missing, prefer};
use crate::report::{self, RunReport, StageClock};

/// Sphere radius for the optional mesh, mm.
const DEFAULT_MESH_RADIUS_MM: f64 = 1.0;

pub const LEFT_COLOR: [u8; 3] = [202, 71, 71];
pub const RIGHT_COLOR: [u8; 3] = [66, 110, 199];

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentArgs {
    /// Input CT volume (.nii, .nii.gz, .mha, .mhd).
    #[arg(long)]
    pub ct: Option<PathBuf>,

    /// ROI atlas: "default" or a path to an atlas JSON file.
    #[arg(long)]
    pub atlas: Option<String>,

    /// Precomputed affine (JSON) mapping scan world coordinates into the
    /// atlas frame; skips registration. Without it the scan is assumed
    /// already atlas-aligned.
    #[arg(long)]
    pub transform: Option<PathBuf>,

    /// Threshold multiplier in T = k*sigma + mu.
    #[arg(long)]
    pub k: Option<f64>,

    /// Output trajectory point spacing in mm.
    #[arg(long)]
    pub resample_spacing: Option<f64>,

    /// Also write a sphere-chain mesh of the resampled trajectories.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub mesh: bool,

    /// Sphere radius for --mesh, mm.
    #[arg(long)]
    pub mesh_radius: Option<f64>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// JSON config supplying any of these settings; flags win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn merged(cli: SegmentArgs) -> Result<SegmentArgs> {
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    let file: SegmentArgs = config::load(path)?;
    Ok(SegmentArgs {
        ct: prefer(cli.ct, file.ct),
        atlas: prefer(cli.atlas, file.atlas),
        transform: prefer(cli.transform, file.transform),
        k: prefer(cli.k, file.k),
        resample_spacing: prefer(cli.resample_spacing, file.resample_spacing),
        mesh: cli.mesh || file.mesh,
        mesh_radius: prefer(cli.mesh_radius, file.mesh_radius),
        out: prefer(cli.out, file.out),
        config: cli.config,
    })
}

/// "default" (or nothing) loads the built-in corridor; anything else is
/// a path to an atlas JSON file.
pub fn load_atlas(name: Option<&str>) -> Result<AtlasBoxStack> {
    match name {
        None | Some("default") => Ok(default_atlas()),
        Some(path) => read_atlas_json(std::path::Path::new(path)),
    }
}

/// Rasterize the atlas onto the scan grid. With a transform, each voxel
/// center is carried into the atlas frame first; the mask stays bound to
/// the scan's own geometry either way.
pub fn atlas_mask_for(
    volume: &Volume,
    atlas: &AtlasBoxStack,
    scan_to_atlas: Option<&dbsloc_core::AffineTransform>,
) -> Result<RoiMask> {
    match scan_to_atlas {
        None => rasterize_atlas(atlas, &volume.grid),
        Some(t) => {
            let lifted = GridSpec::new(
                volume.grid.dims,
                volume.grid.spacing,
                t.compose(volume.grid.voxel_to_world()),
            )?;
            let mask = rasterize_atlas(atlas, &lifted)?;
            RoiMask::new(Volume::new(
                volume.grid.clone(),
                mask.into_volume().data,
            )?)
        }
    }
}

struct SideOutputs {
    native: Trajectory,
    resampled: Trajectory,
}

fn side_metrics(s: &SideOutputs) -> serde_json::Value {
    let extent = s.native.extent();
    serde_json::json!({
        "slices": s.native.points().len(),
        "resampled_points": s.resampled.points().len(),
        "arc_length_mm": s.native.arc_length(),
        "tip_mm": extent.start_mm,
        "entry_mm": extent.end_mm,
        "axial_span_mm": extent.absolute_distance_mm,
    })
}

pub fn run(cli: SegmentArgs) -> Result<()> {
    let args = merged(cli)?;
    let ct = args.ct.clone().ok_or_else(|| missing("ct"))?;
    let out = args.out.clone().ok_or_else(|| missing("out"))?;
    let k = args.k.unwrap_or(DEFAULT_K);
    let spacing_out = args.resample_spacing.unwrap_or(DEFAULT_OUTPUT_SPACING_MM);
    let mesh_radius = args.mesh_radius.unwrap_or(DEFAULT_MESH_RADIUS_MM);

    let mut clock = StageClock::start();
    let volume = read_volume(&ct)?;
    let atlas = load_atlas(args.atlas.as_deref())?;
    let scan_to_atlas = match &args.transform {
        None => {
            eprintln!("segment: no --transform given; scan treated as atlas-aligned, registration skipped");
            None
        }
        Some(path) => {
            eprintln!(
                "segment: registration skipped, using precomputed transform {}",
                path.display()
            );
            Some(read_transform_json(path)?)
        }
    };
    clock.lap("read");

    let mask = atlas_mask_for(&volume, &atlas, scan_to_atlas.as_ref())?;
    let spacing = volume.grid.spacing;
    let masked = apply_roi(volume, mask)?;
    clock.lap("mask");

    let filters = AreaFilters::default_for_spacing(spacing);
    let sets = segment_volume(&masked, k, &filters);
    clock.lap("segment");

    let mut sides = Vec::new();
    for label in [Side::Left, Side::Right] {
        let native = build_trajectory(&sets, label, spacing[2], k)?;
        let resampled = resample_trajectory(&native, spacing_out)?;
        sides.push(SideOutputs { native, resampled });
    }
    clock.lap("trajectory");

    report::ensure_out_dir(&out)?;
    let mut outputs = Vec::new();
    for s in &sides {
        let stem = s.native.label.to_string();
        write_trajectory_csv(std::slice::from_ref(&s.native), &out.join(format!("{stem}.csv")))?;
        write_trajectory_csv(
            std::slice::from_ref(&s.resampled),
            &out.join(format!("{stem}_resampled.csv")),
        )?;
        outputs.push(format!("{stem}.csv"));
        outputs.push(format!("{stem}_resampled.csv"));
    }
    let natives: Vec<Trajectory> = sides.iter().map(|s| s.native.clone()).collect();
    let resampled: Vec<Trajectory> = sides.iter().map(|s| s.resampled.clone()).collect();
    write_trajectory_json(&natives, &out.join("trajectories.json"))?;
    write_trajectory_json(&resampled, &out.join("resampled.json"))?;
    outputs.push("trajectories.json".into());
    outputs.push("resampled.json".into());
    if args.mesh {
        let mut mesh = TriangleMesh::empty();
        for s in &sides {
            let color = match s.resampled.label {
                Side::Left => LEFT_COLOR,
                Side::Right => RIGHT_COLOR,
            };
            mesh.append(trajectory_to_mesh(&s.resampled, mesh_radius, color)?);
        }
        write_ply(&mesh, &out.join("trajectories.ply"))?;
        outputs.push("trajectories.ply".into());
    }
    clock.lap("write");

    let report = RunReport {
        schema: report::REPORT_SCHEMA,
        command: "segment".into(),
        parameters: report::parameters(&args),
        outputs,
        metrics: serde_json::json!({
            "k": k,
            "resample_spacing_mm": spacing_out,
            "roi_voxels": masked.mask().included_count(),
            "left": side_metrics(&sides[0]),
            "right": side_metrics(&sides[1]),
        }),
        timing_seconds: clock.finish(),
    };
    report::write(&out, &report)?;
    for s in &sides {
        println!(
            "segment: {} electrode over {} slices, axial span {:.1} mm",
            s.native.label,
            s.native.points().len(),
            s.native.extent().absolute_distance_mm
        );
    }
    Ok(())
}
