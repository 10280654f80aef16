//! `dbsloc export-mesh`: render trajectories as colored sphere chains in
//! an ASCII PLY file.

use std::path::PathBuf;

use clap::Args;
use dbsloc_core::mesh::{trajectory_to_mesh, write_ply, TriangleMesh};
use dbsloc_core::segmentation::Side;
use dbsloc_core::trajectory::read_trajectory_json;
use dbsloc_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::commands::segment::{LEFT_COLOR, RIGHT_COLOR};
use crate::config::{self, missing, prefer};
use crate::report::{self, RunReport, StageClock};

const DEFAULT_RADIUS_MM: f64 = 1.0;

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExportMeshArgs {
    /// Trajectory JSON, as written by `segment`.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,

    /// Sphere radius in mm.
    #[arg(long)]
    pub radius: Option<f64>,

    /// Left-electrode vertex color as r,g,b (0-255).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub left_color: Option<Vec<u8>>,

    /// Right-electrode vertex color as r,g,b (0-255).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub right_color: Option<Vec<u8>>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// JSON config supplying any of these settings; flags win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn merged(cli: ExportMeshArgs) -> Result<ExportMeshArgs> {
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    let file: ExportMeshArgs = config::load(path)?;
    Ok(ExportMeshArgs {
        trajectories: prefer(cli.trajectories, file.trajectories),
        radius: prefer(cli.radius, file.radius),
        left_color: prefer(cli.left_color, file.left_color),
        right_color: prefer(cli.right_color, file.right_color),
        out: prefer(cli.out, file.out),
        config: cli.config,
    })
}

fn rgb(name: &str, v: &Option<Vec<u8>>, fallback: [u8; 3]) -> Result<[u8; 3]> {
    match v {
        None => Ok(fallback),
        Some(list) => <[u8; 3]>::try_from(list.as_slice()).map_err(|_| {
            Error::InvalidParameter(format!(
                "--{name} needs exactly 3 values, got {}",
                list.len()
            ))
        }),
    }
}

pub fn run(cli: ExportMeshArgs) -> Result<()> {
    let args = merged(cli)?;
    let traj_path = args.trajectories.clone().ok_or_else(|| missing("trajectories"))?;
    let out = args.out.clone().ok_or_else(|| missing("out"))?;
    let radius = args.radius.unwrap_or(DEFAULT_RADIUS_MM);
    let left_color = rgb("left-color", &args.left_color, LEFT_COLOR)?;
    let right_color = rgb("right-color", &args.right_color, RIGHT_COLOR)?;

    let mut clock = StageClock::start();
    let trajectories = read_trajectory_json(&traj_path)?;
    if trajectories.is_empty() {
        return Err(Error::TrajectoryNotFound(format!(
            "{} holds no trajectories",
            traj_path.display()
        )));
    }
    clock.lap("read");

    let mut mesh = TriangleMesh::empty();
    for t in &trajectories {
        let color = match t.label {
            Side::Left => left_color,
            Side::Right => right_color,
        };
        mesh.append(trajectory_to_mesh(t, radius, color)?);
    }
    clock.lap("mesh");

    report::ensure_out_dir(&out)?;
    write_ply(&mesh, &out.join("trajectories.ply"))?;
    clock.lap("write");

    let report = RunReport {
        schema: report::REPORT_SCHEMA,
        command: "export-mesh".into(),
        parameters: report::parameters(&args),
        outputs: vec!["trajectories.ply".into()],
        metrics: serde_json::json!({
            "trajectories": trajectories.len(),
            "sphere_radius_mm": radius,
            "vertices": mesh.vertices.len(),
            "faces": mesh.faces.len(),
        }),
        timing_seconds: clock.finish(),
    };
    report::write(&out, &report)?;
    println!(
        "export-mesh: {} spheres, {} vertices, {} faces -> {}",
        trajectories.iter().map(|t| t.points().len()).sum::<usize>(),
        mesh.vertices.len(),
        mesh.faces.len(),
        out.join("trajectories.ply").display()
    );
    Ok(())
}
