//! `longwatch tag`: run the full over-time confirmation pass and export
//! the per-cell verdicts as CSV and GeoJSON.

use crate::config::{self, FileConfig, GridArgs, TaggingArgs};
use crate::error::CliError;
use clap::Args;
use longwatch_core::tagging::{run_tagging, verdicts_to_csv, verdicts_to_geojson};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct TagArgs {
    /// Frame metadata file (JSONL or CSV).
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Frame file format: jsonl or csv.
    #[arg(long)]
    format: Option<String>,
    /// Output directory for verdicts.csv and verdicts.geojson.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Detector confidence below which detections are demoted.
    #[arg(long)]
    confidence_threshold: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    tagging: TaggingArgs,
}

pub fn run(args: &TagArgs, file: &FileConfig) -> Result<(), CliError> {
    let grid = config::resolve_grid(&args.grid, file)?;
    let params = config::resolve_tagging(&args.tagging, file)?;
    let frames_path =
        config::require_path(args.frames.as_deref(), file.frames.as_deref(), "--frames")?;
    let out = config::require_path(args.out.as_deref(), file.out_dir.as_deref(), "--out")?;
    let format = config::resolve_format(args.format.as_deref(), file)?;
    let parse_cfg = config::resolve_frame_parse(args.confidence_threshold, &grid, file);

    let dataset = super::load_frames(&frames_path, format, &parse_cfg)?;
    let verdicts = run_tagging(&dataset, &grid, &params)?;
    let confirmed = verdicts.iter().filter(|v| v.confirmed).count();
    println!(
        "{} cells observed, {} confirmed (window {}, threshold {})",
        verdicts.len(),
        confirmed,
        params.window,
        params.threshold
    );

    super::write_artifact(&out, "verdicts.csv", &verdicts_to_csv(&verdicts))?;
    let geojson = verdicts_to_geojson(&verdicts, &grid)?;
    super::write_artifact(&out, "verdicts.geojson", &serde_json::to_string(&geojson)?)?;
    Ok(())
}
