//! `longwatch evaluate`: tag, match confirmations against active
//! permits, and report the compliance picture: confirmed, out-of-scope,
//! unpermitted, missed.

use crate::config::{self, FileConfig, GridArgs, TaggingArgs};
use crate::error::CliError;
use clap::Args;
use longwatch_core::evaluate::{
    build_report, cluster_unpermitted, clusters_to_geojson, impact_factor, match_confirmations,
    per_borough_csv,
};
use longwatch_core::ingest::filter_active;
use longwatch_core::tagging::run_tagging;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Frame metadata file (JSONL or CSV).
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Frame file format: jsonl or csv.
    #[arg(long)]
    format: Option<String>,
    /// Permit registry CSV.
    #[arg(long)]
    permits: Option<PathBuf>,
    /// JSON column map for the permit CSV.
    #[arg(long)]
    column_map: Option<PathBuf>,
    /// Borough boundary GeoJSON (enables per-borough cluster attribution).
    #[arg(long)]
    boundaries: Option<PathBuf>,
    /// Neighborhood polygons for impact factors (GeoJSON).
    #[arg(long)]
    areas: Option<PathBuf>,
    /// Property carrying the area id in the neighborhood file.
    #[arg(long, default_value = "ntaname")]
    area_property: String,
    /// Evaluation date (YYYY-MM-DD); permits expiring before it are inactive.
    #[arg(long)]
    as_of: Option<chrono::NaiveDate>,
    /// Output directory.
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

pub fn run(args: &EvaluateArgs, file: &FileConfig) -> Result<(), CliError> {
    let grid = config::resolve_grid(&args.grid, file)?;
    let params = config::resolve_tagging(&args.tagging, file)?;
    let frames_path =
        config::require_path(args.frames.as_deref(), file.frames.as_deref(), "--frames")?;
    let permits_path = config::require_path(
        args.permits.as_deref(),
        file.permits.as_deref(),
        "--permits",
    )?;
    let out = config::require_path(args.out.as_deref(), file.out_dir.as_deref(), "--out")?;
    let as_of = args
        .as_of
        .or(file.as_of)
        .ok_or_else(|| CliError::usage("missing required input: --as-of"))?;
    let format = config::resolve_format(args.format.as_deref(), file)?;
    let parse_cfg = config::resolve_frame_parse(args.confidence_threshold, &grid, file);
    let column_map = config::resolve_column_map(args.column_map.as_deref(), file)?;

    let dataset = super::load_frames(&frames_path, format, &parse_cfg)?;
    let permits = super::load_permits(&permits_path, &column_map, &grid.bounds)?;
    let active = filter_active(&permits.permits, as_of);
    println!(
        "{} frames, {} permits ({} active as of {as_of})",
        dataset.frames.len(),
        permits.permits.len(),
        active.len()
    );

    let boundaries = args
        .boundaries
        .clone()
        .or_else(|| file.boundaries.clone())
        .map(|p| super::load_boroughs(&p))
        .transpose()?;

    let verdicts = run_tagging(&dataset, &grid, &params)?;
    let report = build_report(
        &verdicts,
        &active,
        &dataset.frames,
        &grid,
        params.window,
        boundaries.as_ref(),
    )?;
    report.check_identities().map_err(CliError::Internal)?;

    let in_scope = report.in_scope_permits.max(1) as f64;
    let total = report.total_permits.max(1) as f64;
    println!("\nactive permits:      {}", report.total_permits);
    println!(
        "  out of scope:      {} ({:.1}%)",
        report.out_of_scope_permits,
        report.out_of_scope_permits as f64 / total * 100.0
    );
    println!(
        "  confirmed:         {} ({:.1}% of in-scope)",
        report.confirmed_permitted,
        report.confirmed_permitted as f64 / in_scope * 100.0
    );
    println!(
        "  missed:            {} ({:.1}% of in-scope)",
        report.missed_permits,
        report.missed_permits as f64 / in_scope * 100.0
    );
    println!("tagged structures:   {}", report.tagged_total);
    println!(
        "  unpermitted:       {} ({:.1}% of tagged)",
        report.unpermitted_clusters,
        report.unpermitted_clusters as f64 / report.tagged_total.max(1) as f64 * 100.0
    );

    super::write_artifact(&out, "report.json", &super::to_pretty_json(&report)?)?;
    let outcome = match_confirmations(&verdicts, &active, &grid)?;
    let clusters = cluster_unpermitted(&outcome.unmatched_cells, &grid);
    let cluster_geojson = clusters_to_geojson(&clusters, &grid)?;
    super::write_artifact(
        &out,
        "unpermitted.geojson",
        &serde_json::to_string(&cluster_geojson)?,
    )?;
    super::write_artifact(&out, "per_borough.csv", &per_borough_csv(&report))?;

    if let Some(areas_path) = args.areas.clone().or_else(|| file.areas.clone()) {
        let areas = super::load_areas(&areas_path, &args.area_property)?;
        let factors = impact_factor(&active, &areas, as_of);
        let geojson = super::impact::factors_to_geojson(&areas, &factors);
        super::write_artifact(&out, "impact.geojson", &serde_json::to_string(&geojson)?)?;
    }
    Ok(())
}
