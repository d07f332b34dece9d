//! `longwatch curate`: select annotation candidates near active
//! permits, stratify them to the permit borough distribution, and report
//! how well the selection matches (KL divergence, both directions).

use crate::config::{self, FileConfig, GridArgs};
use crate::error::CliError;
use clap::Args;
use longwatch_core::curation::{
    kl_divergence, near_permit_filter, stratified_sample, BoroughDistribution,
};
use longwatch_core::ingest::{filter_active, Borough, FrameRecord};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct CurateArgs {
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
    /// Borough boundary GeoJSON (labels candidates).
    #[arg(long)]
    boundaries: Option<PathBuf>,
    /// How many frames to select.
    #[arg(long)]
    total: usize,
    /// Sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Near-permit distance gate (meters).
    #[arg(long)]
    max_distance_m: Option<f64>,
    /// Heading-vs-bearing gate (degrees).
    #[arg(long)]
    angle_tolerance_deg: Option<f64>,
    /// Evaluation date for the active-permit filter.
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
}

#[derive(Debug, Serialize)]
struct CurateSummary {
    candidates: usize,
    selected: usize,
    quotas: BTreeMap<String, usize>,
    selected_counts: BTreeMap<String, usize>,
    shortfalls: BTreeMap<String, usize>,
    /// None when a borough with target weight received zero draws.
    kl_permit_vs_selected: Option<f64>,
    kl_selected_vs_permit: Option<f64>,
}

pub fn run(args: &CurateArgs, file: &FileConfig) -> Result<(), CliError> {
    let grid = config::resolve_grid(&args.grid, file)?;
    let curation = config::resolve_curation(args.max_distance_m, args.angle_tolerance_deg, file)?;
    let frames_path =
        config::require_path(args.frames.as_deref(), file.frames.as_deref(), "--frames")?;
    let permits_path = config::require_path(
        args.permits.as_deref(),
        file.permits.as_deref(),
        "--permits",
    )?;
    let boundaries_path = config::require_path(
        args.boundaries.as_deref(),
        file.boundaries.as_deref(),
        "--boundaries",
    )?;
    let out = config::require_path(args.out.as_deref(), file.out_dir.as_deref(), "--out")?;
    let format = config::resolve_format(args.format.as_deref(), file)?;
    let parse_cfg = config::resolve_frame_parse(args.confidence_threshold, &grid, file);
    let column_map = config::resolve_column_map(args.column_map.as_deref(), file)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let dataset = super::load_frames(&frames_path, format, &parse_cfg)?;
    let permits = super::load_permits(&permits_path, &column_map, &grid.bounds)?;
    let active = match args.as_of.or(file.as_of) {
        Some(as_of) => filter_active(&permits.permits, as_of),
        None => permits.permits.clone(),
    };
    let boroughs = super::load_boroughs(&boundaries_path)?;

    let matches = near_permit_filter(&dataset.frames, &active, &curation, &grid)?;
    let candidates: Vec<(FrameRecord, Borough)> = matches
        .iter()
        .filter_map(|m| {
            boroughs
                .label(m.frame.location)
                .map(|b| (m.frame.clone(), b))
        })
        .collect();
    println!(
        "{} frames near active permits, {} labeled with a borough",
        matches.len(),
        candidates.len()
    );

    let mut permit_counts: BTreeMap<Borough, usize> = BTreeMap::new();
    for p in &active {
        *permit_counts.entry(p.borough).or_default() += 1;
    }
    let target = BoroughDistribution::from_counts(&permit_counts)?;

    let sample = stratified_sample(&candidates, &target, args.total, seed)?;

    // distribution match, both directions; a borough with zero draws
    // leaves the forward divergence undefined rather than failing the run
    let selected_dist = BoroughDistribution::from_counts(&sample.selected_counts)
        .map_err(|e| CliError::data(format!("empty selection: {e}")))?;
    let kl_pq = kl_divergence(&target, &selected_dist).ok();
    let kl_qp = kl_divergence(&selected_dist, &target).ok();
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    println!(
        "selected {} frames; KL(permit||selected) = {}, KL(selected||permit) = {}",
        sample.selected.len(),
        show(kl_pq),
        show(kl_qp)
    );

    let mut csv = String::from("frame_id\n");
    for f in &sample.selected {
        csv.push_str(&f.frame_id);
        csv.push('\n');
    }
    super::write_artifact(&out, "selected_frames.csv", &csv)?;

    let by_name = |m: &BTreeMap<Borough, usize>| -> BTreeMap<String, usize> {
        m.iter().map(|(b, &c)| (b.name().to_string(), c)).collect()
    };
    let summary = CurateSummary {
        candidates: candidates.len(),
        selected: sample.selected.len(),
        quotas: by_name(&sample.quotas),
        selected_counts: by_name(&sample.selected_counts),
        shortfalls: by_name(&sample.shortfalls),
        kl_permit_vs_selected: kl_pq,
        kl_selected_vs_permit: kl_qp,
    };
    super::write_artifact(
        &out,
        "curation_summary.json",
        &super::to_pretty_json(&summary)?,
    )?;
    Ok(())
}
