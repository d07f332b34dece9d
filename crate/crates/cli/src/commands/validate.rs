//! `longwatch validate`: parse every input, report record and reject
//! counts, the covered time range, monthly detection totals, and the
//! per-borough frame distribution when a boundary file is available.

use crate::config::{self, FileConfig, GridArgs};
use crate::error::CliError;
use clap::Args;
use longwatch_core::ingest::filter_active;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct ValidateArgs {
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
    /// Borough boundary GeoJSON.
    #[arg(long)]
    boundaries: Option<PathBuf>,
    /// Evaluation date (YYYY-MM-DD) for the active-permit count.
    #[arg(long)]
    as_of: Option<chrono::NaiveDate>,
    /// Detector confidence below which detections are demoted.
    #[arg(long)]
    confidence_threshold: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

pub fn run(args: &ValidateArgs, file: &FileConfig) -> Result<(), CliError> {
    let grid = config::resolve_grid(&args.grid, file)?;
    let frames_path =
        config::require_path(args.frames.as_deref(), file.frames.as_deref(), "--frames")?;
    let permits_path = config::require_path(
        args.permits.as_deref(),
        file.permits.as_deref(),
        "--permits",
    )?;
    let format = config::resolve_format(args.format.as_deref(), file)?;
    let parse_cfg = config::resolve_frame_parse(args.confidence_threshold, &grid, file);
    let column_map = config::resolve_column_map(args.column_map.as_deref(), file)?;

    let dataset = super::load_frames(&frames_path, format, &parse_cfg)?;
    println!(
        "frames: {} valid, {} rejected (of {} lines)",
        dataset.frames.len(),
        dataset.rejects.rejected,
        dataset.rejects.total_lines
    );
    for example in &dataset.rejects.examples {
        println!("  rejected line {}: {}", example.line, example.reason);
    }
    println!("dataset digest: {}", dataset.source_digest);
    if let (Some(first), Some(last)) = (dataset.frames.first(), dataset.frames.last()) {
        println!("time range: {} .. {}", first.captured_at, last.captured_at);
    }

    // monthly detection counts and coverage days
    let mut monthly: BTreeMap<String, (usize, std::collections::BTreeSet<chrono::NaiveDate>)> =
        BTreeMap::new();
    for f in &dataset.frames {
        let key = f.captured_at.format("%Y-%m").to_string();
        let entry = monthly.entry(key).or_default();
        if f.detected {
            entry.0 += 1;
        }
        entry.1.insert(f.captured_at.date_naive());
    }
    if !monthly.is_empty() {
        println!("\nperiod   detections  days-covered");
        for (period, (detections, days)) in &monthly {
            println!("{period}  {detections:>10}  {:>12}", days.len());
        }
    }

    // per-borough frame distribution, when boundaries are given
    let boundaries_path = args.boundaries.clone().or_else(|| file.boundaries.clone());
    if let Some(path) = boundaries_path {
        let map = super::load_boroughs(&path)?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut unassigned = 0usize;
        for f in &dataset.frames {
            match map.label(f.location) {
                Some(b) => *counts.entry(b.name()).or_default() += 1,
                None => unassigned += 1,
            }
        }
        let total = dataset.frames.len().max(1) as f64;
        println!("\nborough frame distribution:");
        for (name, count) in &counts {
            println!("  {name:<14} {:>8}  {:.3}", count, *count as f64 / total);
        }
        if unassigned > 0 {
            println!("  {:<14} {unassigned:>8}", "(unassigned)");
        }
    }

    let permits = super::load_permits(&permits_path, &column_map, &grid.bounds)?;
    println!(
        "\npermits: {} unique, {} rejected rows, {} filtered by type",
        permits.permits.len(),
        permits.rejects.rejected,
        permits.filtered_by_type
    );
    for example in &permits.rejects.examples {
        println!("  rejected line {}: {}", example.line, example.reason);
    }
    if let Some(as_of) = args.as_of.or(file.as_of) {
        let active = filter_active(&permits.permits, as_of);
        println!("active permits as of {as_of}: {}", active.len());
    }
    Ok(())
}
