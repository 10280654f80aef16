//! `dbsloc register`: align a moving volume to a fixed volume and write
//! the recovered world-to-world affine.

use std::path::PathBuf;

use clap::Args;
use dbsloc_core::io::read_volume;
use dbsloc_core::registration::{
    model_from_name, model_names, register_affine, register_rigid, RegistrationConfig,
    RegistrationResult, DEFAULT_SAMPLE_SEED,
};
use dbsloc_core::spatial::transform::{read_transform_json, write_transform_json};
use dbsloc_core::{AffineTransform, Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, missing, prefer};
use crate::report::{self, RunReport, StageClock};

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RegisterArgs {
    /// Reference volume; the result maps its world frame to the moving
    /// volume's.
    #[arg(long)]
    pub fixed: Option<PathBuf>,

    /// Volume to align.
    #[arg(long)]
    pub moving: Option<PathBuf>,

    /// Transform model: rigid or affine.
    #[arg(long)]
    pub model: Option<String>,

    /// Similarity metric: ssd or ncc.
    #[arg(long)]
    pub metric: Option<String>,

    /// Initial transform JSON to refine.
    #[arg(long)]
    pub init: Option<PathBuf>,

    /// Resolution levels in the coarse-to-fine pyramid.
    #[arg(long)]
    pub pyramid_levels: Option<usize>,

    /// Optimizer iteration cap per level.
    #[arg(long)]
    pub max_iterations: Option<usize>,

    /// Optimizer convergence tolerance on parameter steps.
    #[arg(long)]
    pub tolerance: Option<f64>,

    /// Fraction of fixed voxels sampled by the metric, in (0, 1].
    #[arg(long)]
    pub sample_fraction: Option<f64>,

    /// Seed for metric sample placement; equal seeds give bit-identical
    /// results.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// JSON config supplying any of these settings; flags win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn merged(cli: RegisterArgs) -> Result<RegisterArgs> {
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    let file: RegisterArgs = config::load(path)?;
    Ok(RegisterArgs {
        fixed: prefer(cli.fixed, file.fixed),
        moving: prefer(cli.moving, file.moving),
        model: prefer(cli.model, file.model),
        metric: prefer(cli.metric, file.metric),
        init: prefer(cli.init, file.init),
        pyramid_levels: prefer(cli.pyramid_levels, file.pyramid_levels),
        max_iterations: prefer(cli.max_iterations, file.max_iterations),
        tolerance: prefer(cli.tolerance, file.tolerance),
        sample_fraction: prefer(cli.sample_fraction, file.sample_fraction),
        seed: prefer(cli.seed, file.seed),
        out: prefer(cli.out, file.out),
        config: cli.config,
    })
}

fn rigid_decomposition(t: &AffineTransform) -> serde_json::Value {
    let degrees: Vec<f64> = t.euler_angles().iter().map(|a| a.to_degrees()).collect();
    serde_json::json!({
        "translation_mm": t.translation_part(),
        "rotation_deg": degrees,
    })
}

pub fn run(cli: RegisterArgs) -> Result<()> {
    let args = merged(cli)?;
    let fixed_path = args.fixed.clone().ok_or_else(|| missing("fixed"))?;
    let moving_path = args.moving.clone().ok_or_else(|| missing("moving"))?;
    let out = args.out.clone().ok_or_else(|| missing("out"))?;
    let model = args.model.clone().unwrap_or_else(|| "rigid".into());
    model_from_name(&model)?;

    let mut clock = StageClock::start();
    let fixed = read_volume(&fixed_path)?;
    let moving = read_volume(&moving_path)?;
    let init = match &args.init {
        Some(path) => read_transform_json(path)?,
        None => AffineTransform::identity(),
    };
    clock.lap("read");

    let defaults = RegistrationConfig::default();
    let cfg = RegistrationConfig {
        metric: args.metric.clone().unwrap_or(defaults.metric),
        pyramid_levels: args.pyramid_levels.unwrap_or(defaults.pyramid_levels),
        max_iterations_per_level: args
            .max_iterations
            .unwrap_or(defaults.max_iterations_per_level),
        parameter_tolerance: args.tolerance.unwrap_or(defaults.parameter_tolerance),
        initial_transform: init,
        sample_fraction: args.sample_fraction.unwrap_or(defaults.sample_fraction),
        sample_seed: args.seed.unwrap_or(DEFAULT_SAMPLE_SEED),
    };
    let result: RegistrationResult = match model.as_str() {
        "rigid" => register_rigid(&fixed, &moving, &cfg)?,
        "affine" => register_affine(&fixed, &moving, &init, &cfg)?,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown model '{other}' (expected one of {:?})",
                model_names()
            )))
        }
    };
    clock.lap("optimize");

    report::ensure_out_dir(&out)?;
    write_transform_json(&result.transform, &out.join("transform.json"))?;
    clock.lap("write");

    let mut metrics = serde_json::json!({
        "model": model,
        "metric": cfg.metric,
        "metric_value": result.metric_value,
        "converged": result.converged,
        "iterations": result.iterations,
    });
    if model == "rigid" {
        metrics["rigid"] = rigid_decomposition(&result.transform);
    }
    let report = RunReport {
        schema: report::REPORT_SCHEMA,
        command: "register".into(),
        parameters: report::parameters(&args),
        outputs: vec!["transform.json".into()],
        metrics,
        timing_seconds: clock.finish(),
    };
    report::write(&out, &report)?;
    println!(
        "register: {} {} converged={} after {} iterations, metric {:.6}",
        model, cfg.metric, result.converged, result.iterations, result.metric_value
    );
    Ok(())
}
