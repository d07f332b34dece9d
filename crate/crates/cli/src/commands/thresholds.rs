//! `longwatch thresholds`: sweep the rolling-window threshold and emit
//! the amplified precision-recall curve plus the selected operating
//! point.

use crate::config::FileConfig;
use crate::error::CliError;
use clap::Args;
use longwatch_core::amplify::{pr_curve, select_threshold, BaseMetrics};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct ThresholdsArgs {
    /// Base detector recall in (0, 1].
    #[arg(long)]
    recall: Option<f64>,
    /// Base detector precision in (0, 1].
    #[arg(long)]
    precision: Option<f64>,
    /// Window length (observations), 1..=64.
    #[arg(long)]
    window: Option<usize>,
    /// Output directory for pr_curve.csv and selection.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: &ThresholdsArgs, file: &FileConfig) -> Result<(), CliError> {
    let base = BaseMetrics::new(
        args.recall.or(file.base_recall).unwrap_or(0.5676),
        args.precision.or(file.base_precision).unwrap_or(0.9329),
    )?;
    let window = args.window.unwrap_or(20);
    let curve = pr_curve(&base, window)?;
    let selected = select_threshold(&base, window)?;

    let mut csv = String::from("threshold,recall,precision\n");
    for point in &curve {
        csv.push_str(&format!(
            "{},{:.6},{:.6}\n",
            point.threshold, point.recall, point.precision
        ));
    }

    println!(
        "window {window}, base recall {:.4}, base precision {:.4}",
        base.recall, base.precision
    );
    println!(
        "selected threshold {} (recall {:.4}, precision {:.4})",
        selected.threshold, selected.recall, selected.precision
    );
    if let Some(out) = args.out.as_ref().or(file.out_dir.as_ref()) {
        super::write_artifact(out, "pr_curve.csv", &csv)?;
        super::write_artifact(out, "selection.json", &super::to_pretty_json(&selected)?)?;
    } else {
        print!("{csv}");
    }
    Ok(())
}
