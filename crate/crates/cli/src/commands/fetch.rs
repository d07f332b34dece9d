//! `longwatch fetch-permits`: pull the permit registry from the
//! open-data endpoint and store it as a canonical CSV that feeds straight
//! back into the other commands.

use crate::config::{self, FileConfig};
use crate::error::CliError;
use clap::Args;
use longwatch_core::geo::GeoBounds;
use longwatch_core::ingest::fetch::{fetch_permits, FetchConfig};
use longwatch_core::ingest::PermitColumnMap;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Dataset endpoint URL.
    #[arg(long)]
    endpoint: String,
    /// Rows per page, 1..=50000.
    #[arg(long)]
    page_size: Option<usize>,
    /// Application token (falls back to the LONGWATCH_APP_TOKEN env var).
    #[arg(long)]
    app_token: Option<String>,
    /// JSON column map describing the remote CSV schema.
    #[arg(long)]
    column_map: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: &FetchArgs, file: &FileConfig) -> Result<(), CliError> {
    let column_map = config::resolve_column_map(args.column_map.as_deref(), file)?;
    let mut cfg = FetchConfig::new(args.endpoint.clone());
    if let Some(page_size) = args.page_size {
        if page_size == 0 || page_size > 50_000 {
            return Err(CliError::usage(format!(
                "--page-size {page_size} outside [1, 50000]"
            )));
        }
        cfg.page_size = page_size;
    }
    cfg.app_token = config::resolve_app_token(args.app_token.clone(), file);

    let parsed = fetch_permits(&cfg, &column_map, &GeoBounds::nyc())?;
    println!(
        "fetched {} permits ({} rejected rows, {} filtered by type)",
        parsed.permits.len(),
        parsed.rejects.rejected,
        parsed.filtered_by_type
    );

    // re-emit in the default registry schema so downstream commands can
    // read the file with no column map
    let defaults = PermitColumnMap::default();
    let mut csv = format!(
        "{},{},{},{},{},{},{}\n",
        defaults.permit_id,
        defaults.lat,
        defaults.lon,
        defaults.issued_on,
        defaults.expires_on,
        defaults.borough,
        defaults.renewed
    );
    for p in &parsed.permits {
        csv.push_str(&format!(
            "{},{:.7},{:.7},{},{},{},{}\n",
            p.permit_id,
            p.location.lat,
            p.location.lon,
            p.issued_on,
            p.expires_on,
            p.borough.name(),
            p.renewed
        ));
    }
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&args.out, csv)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
