//! `dbsloc validate`: score recovered trajectories against a ground-truth
//! table, one metrics row per electrode.

use std::path::PathBuf;

use clap::Args;
use dbsloc_core::trajectory::read_trajectory_json;
use dbsloc_core::validation::{
    euclidean_distances, make_report, read_ground_truth, write_report_json, ElectrodeMetrics,
};
use dbsloc_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, missing, prefer};
use crate::report::{self, RunReport, StageClock};

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateArgs {
    /// Trajectory JSON, as written by `segment` (trajectories.json).
    #[arg(long)]
    pub trajectories: Option<PathBuf>,

    /// Ground-truth CSV (slice_index,label,x_mm,y_mm,z_mm).
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// JSON config supplying any of these settings; flags win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn merged(cli: ValidateArgs) -> Result<ValidateArgs> {
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    let file: ValidateArgs = config::load(path)?;
    Ok(ValidateArgs {
        trajectories: prefer(cli.trajectories, file.trajectories),
        ground_truth: prefer(cli.ground_truth, file.ground_truth),
        out: prefer(cli.out, file.out),
        config: cli.config,
    })
}

pub fn run(cli: ValidateArgs) -> Result<()> {
    let args = merged(cli)?;
    let traj_path = args.trajectories.clone().ok_or_else(|| missing("trajectories"))?;
    let gt_path = args.ground_truth.clone().ok_or_else(|| missing("ground-truth"))?;
    let out = args.out.clone().ok_or_else(|| missing("out"))?;

    let mut clock = StageClock::start();
    let trajectories = read_trajectory_json(&traj_path)?;
    if trajectories.is_empty() {
        return Err(Error::TrajectoryNotFound(format!(
            "{} holds no trajectories",
            traj_path.display()
        )));
    }
    let gt = read_ground_truth(&gt_path)?;
    clock.lap("read");

    let mut per_electrode = Vec::new();
    for t in &trajectories {
        let distances = euclidean_distances(t, &gt);
        per_electrode.push(ElectrodeMetrics::from_distances(t.label, &distances)?);
    }
    let k_used = trajectories[0].source_k;
    clock.lap("score");

    report::ensure_out_dir(&out)?;
    let validation = make_report(per_electrode.clone(), k_used, clock.total());
    write_report_json(&validation, &out.join("validation.json"))?;
    clock.lap("write");

    let report = RunReport {
        schema: report::REPORT_SCHEMA,
        command: "validate".into(),
        parameters: report::parameters(&args),
        outputs: vec!["validation.json".into()],
        metrics: serde_json::to_value(&per_electrode)
            .map_err(|e| Error::InvalidParameter(format!("serialize metrics: {e}")))?,
        timing_seconds: clock.finish(),
    };
    report::write(&out, &report)?;

    println!("label  matched  missed  spurious  mean_ed_mm  max_ed_mm      mse");
    for m in &per_electrode {
        println!(
            "{:<5}  {:>7}  {:>6}  {:>8}  {:>10.3}  {:>9.3}  {:>7.3}",
            m.label.to_string(),
            m.matched_slices,
            m.missed_slices,
            m.spurious_slices,
            m.mean_ed_mm,
            m.max_ed_mm,
            m.mse_mm,
        );
    }
    Ok(())
}
