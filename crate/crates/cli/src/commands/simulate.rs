//! `longwatch simulate`: synthetic-world check: does the pipeline's
//! confirmation rate match the analytic amplification model?

use crate::config::{self, FileConfig, TaggingArgs};
use crate::error::CliError;
use clap::Args;
use longwatch_core::simulate::{
    end_to_end_check, DetectorModel, EndToEndParams, FrameGenParams, PlaneRect,
};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of permitted structures.
    #[arg(long, default_value_t = 400)]
    permitted: usize,
    /// Number of planted unpermitted structures.
    #[arg(long, default_value_t = 100)]
    unpermitted: usize,
    /// Passes (observations) per structure.
    #[arg(long, default_value_t = 20)]
    passes: usize,
    /// Simulated per-observation detector recall.
    #[arg(long)]
    recall: Option<f64>,
    /// World half-extent in feet.
    #[arg(long, default_value_t = 12_000.0)]
    half_extent_ft: f64,
    /// World seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the full JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the generated frames.jsonl and permits.csv into this
    /// directory (a sandbox dataset for the file-based commands).
    #[arg(long)]
    emit_world: Option<PathBuf>,
    #[command(flatten)]
    tagging: TaggingArgs,
}

pub fn run(args: &SimulateArgs, file: &FileConfig) -> Result<(), CliError> {
    let tagging = config::resolve_tagging(&args.tagging, file)?;
    if args.passes < tagging.window {
        return Err(CliError::usage(format!(
            "passes ({}) below the window ({}): nothing could ever confirm",
            args.passes, tagging.window
        )));
    }
    let params = EndToEndParams {
        n_permitted: args.permitted,
        n_unpermitted: args.unpermitted,
        bounds: PlaneRect::centered(args.half_extent_ft),
        seed: args.seed.or(file.seed).unwrap_or(42),
        frame_gen: FrameGenParams {
            passes_per_shed: args.passes,
            ..Default::default()
        },
        detector: DetectorModel {
            recall: args.recall.or(file.base_recall).unwrap_or(0.5676),
            ..Default::default()
        },
        tagging,
    };
    let report = end_to_end_check(&params)?;

    if let Some(dir) = &args.emit_world {
        let (permit_csv, frames_jsonl) = longwatch_core::simulate::render_world_files(
            &params,
            &longwatch_core::geo::GridConfig::default(),
        )?;
        crate::commands::write_artifact(dir, "permits.csv", &permit_csv)?;
        crate::commands::write_artifact(dir, "frames.jsonl", &frames_jsonl)?;
    }

    println!(
        "world: {} structures ({} permitted, {} planted unpermitted), {} passes each, recall {:.4}",
        report.sheds_total,
        params.n_permitted,
        params.n_unpermitted,
        params.frame_gen.passes_per_shed,
        params.detector.recall
    );
    println!(
        "confirmed {}/{} = {:.4}; analytic {:.4}; |delta| {:.4} vs 4 sigma {:.4}",
        report.sheds_confirmed,
        report.sheds_total,
        report.empirical_fraction,
        report.analytic_recall,
        report.delta,
        report.tolerance
    );
    println!(
        "unpermitted clusters recovered: {}/{}; report identities: {}",
        report.recovered_unpermitted_clusters,
        report.planted_unpermitted,
        if report.identities_ok { "ok" } else { "BROKEN" }
    );
    println!("verdict: {}", if report.passed { "PASS" } else { "FAIL" });

    if let Some(out) = &args.out {
        if let Some(dir) = out.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(out, super::to_pretty_json(&report)?)?;
        println!("wrote {}", out.display());
    }
    if !report.passed {
        return Err(CliError::Internal(
            "simulation check failed (see verdict above)".into(),
        ));
    }
    Ok(())
}
