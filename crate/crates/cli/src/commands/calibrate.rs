//! `dbsloc calibrate`: sweep the threshold multiplier k over one or more
//! (scan, ground truth) pairs and report the plateau where the worst-case
//! mean trajectory error stays under a millimetre.

use std::path::PathBuf;

use clap::Args;
use dbsloc_core::atlas::{apply_roi, MaskedVolume};
use dbsloc_core::calibrate::{
    calibrate_k_multi, write_sweep_csv, DEFAULT_K_RANGE, DEFAULT_K_STEP, PLATEAU_ED_LIMIT_MM,
};
use dbsloc_core::io::read_volume;
use dbsloc_core::validation::{read_ground_truth, GroundTruth};
use dbsloc_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::commands::segment::{atlas_mask_for, load_atlas};
use crate::config::{self, missing, prefer, prefer_list};
use crate::report::{self, RunReport, StageClock};

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateArgs {
    /// Scan volume; repeat for multiple calibration cases.
    #[arg(long = "ct")]
    pub cts: Vec<PathBuf>,

    /// Ground-truth CSV matching each --ct, in the same order.
    #[arg(long = "ground-truth")]
    pub ground_truths: Vec<PathBuf>,

    /// ROI atlas: "default" or a path to an atlas JSON file.
    #[arg(long)]
    pub atlas: Option<String>,

    /// Sweep lower bound for k.
    #[arg(long)]
    pub k_min: Option<f64>,

    /// Sweep upper bound for k.
    #[arg(long)]
    pub k_max: Option<f64>,

    /// Sweep grid step for k.
    #[arg(long)]
    pub k_step: Option<f64>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// JSON config supplying any of these settings; flags win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn merged(cli: CalibrateArgs) -> Result<CalibrateArgs> {
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    let file: CalibrateArgs = config::load(path)?;
    Ok(CalibrateArgs {
        cts: prefer_list(cli.cts, file.cts),
        ground_truths: prefer_list(cli.ground_truths, file.ground_truths),
        atlas: prefer(cli.atlas, file.atlas),
        k_min: prefer(cli.k_min, file.k_min),
        k_max: prefer(cli.k_max, file.k_max),
        k_step: prefer(cli.k_step, file.k_step),
        out: prefer(cli.out, file.out),
        config: cli.config,
    })
}

pub fn run(cli: CalibrateArgs) -> Result<()> {
    let args = merged(cli)?;
    if args.cts.is_empty() {
        return Err(missing("ct"));
    }
    if args.cts.len() != args.ground_truths.len() {
        return Err(Error::InvalidParameter(format!(
            "{} --ct volume(s) but {} --ground-truth file(s); pass one per scan",
            args.cts.len(),
            args.ground_truths.len()
        )));
    }
    let out = args.out.clone().ok_or_else(|| missing("out"))?;
    let k_range = (
        args.k_min.unwrap_or(DEFAULT_K_RANGE.0),
        args.k_max.unwrap_or(DEFAULT_K_RANGE.1),
    );
    let k_step = args.k_step.unwrap_or(DEFAULT_K_STEP);

    let mut clock = StageClock::start();
    let atlas = load_atlas(args.atlas.as_deref())?;
    let mut masked: Vec<MaskedVolume> = Vec::new();
    let mut truths: Vec<GroundTruth> = Vec::new();
    for (ct, gt_path) in args.cts.iter().zip(&args.ground_truths) {
        let volume = read_volume(ct)?;
        let mask = atlas_mask_for(&volume, &atlas, None)?;
        masked.push(apply_roi(volume, mask)?);
        truths.push(read_ground_truth(gt_path)?);
    }
    clock.lap("read");

    let cases: Vec<(&MaskedVolume, &GroundTruth)> =
        masked.iter().zip(truths.iter()).collect();
    let calibration = calibrate_k_multi(&cases, k_range, k_step)?;
    clock.lap("sweep");

    report::ensure_out_dir(&out)?;
    write_sweep_csv(&calibration.points, &out.join("sweep.csv"))?;
    clock.lap("write");

    let qualifying = calibration
        .points
        .iter()
        .filter(|p| p.mean_ed_mm < PLATEAU_ED_LIMIT_MM)
        .count();
    let report = RunReport {
        schema: report::REPORT_SCHEMA,
        command: "calibrate".into(),
        parameters: report::parameters(&args),
        outputs: vec!["sweep.csv".into()],
        metrics: serde_json::json!({
            "cases": args.cts.len(),
            "k_range": [k_range.0, k_range.1],
            "k_step": k_step,
            "grid_points": calibration.points.len(),
            "qualifying_points": qualifying,
            "ed_limit_mm": PLATEAU_ED_LIMIT_MM,
            "plateau": calibration.plateau.map(|(lo, hi)| serde_json::json!({
                "k_low": lo,
                "k_high": hi,
            })),
        }),
        timing_seconds: clock.finish(),
    };
    report::write(&out, &report)?;
    match calibration.plateau {
        Some((lo, hi)) => println!(
            "calibrate: {} grid points, plateau k in [{lo}, {hi}] under {PLATEAU_ED_LIMIT_MM} mm",
            calibration.points.len()
        ),
        None => println!(
            "calibrate: {} grid points, no k kept mean error under {PLATEAU_ED_LIMIT_MM} mm",
            calibration.points.len()
        ),
    }
    Ok(())
}
