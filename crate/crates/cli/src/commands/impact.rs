//! `longwatch impact`: summed permit age per neighborhood polygon.

use crate::config::{self, FileConfig};
use crate::error::CliError;
use clap::Args;
use longwatch_core::boundary::{feature, feature_collection, AreaSet};
use longwatch_core::evaluate::{impact_factor, ImpactFactor, UNASSIGNED_AREA};
use longwatch_core::geo::GeoBounds;
use longwatch_core::ingest::filter_active;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct ImpactArgs {
    /// Permit registry CSV.
    #[arg(long)]
    permits: Option<PathBuf>,
    /// JSON column map for the permit CSV.
    #[arg(long)]
    column_map: Option<PathBuf>,
    /// Neighborhood polygons (GeoJSON FeatureCollection).
    #[arg(long)]
    areas: Option<PathBuf>,
    /// Property carrying the area id.
    #[arg(long, default_value = "ntaname")]
    area_property: String,
    /// Evaluation date (YYYY-MM-DD).
    #[arg(long)]
    as_of: Option<chrono::NaiveDate>,
    /// Output directory for impact.geojson and impact.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Impact factors as a FeatureCollection carrying each area's polygon.
pub fn factors_to_geojson(areas: &AreaSet, factors: &[ImpactFactor]) -> serde_json::Value {
    let mut features = Vec::with_capacity(factors.len());
    for factor in factors {
        if factor.area_id == UNASSIGNED_AREA {
            continue; // no geometry to attach
        }
        let Some(area) = areas.areas().iter().find(|a| a.id == factor.area_id) else {
            continue;
        };
        let mut props = serde_json::Map::new();
        props.insert("area_id".into(), factor.area_id.clone().into());
        props.insert("summed_age_days".into(), factor.summed_age_days.into());
        props.insert("permit_count".into(), factor.permit_count.into());
        features.push(feature(area.geometry_json(), props));
    }
    feature_collection(features)
}

pub fn run(args: &ImpactArgs, file: &FileConfig) -> Result<(), CliError> {
    let permits_path = config::require_path(
        args.permits.as_deref(),
        file.permits.as_deref(),
        "--permits",
    )?;
    let areas_path = config::require_path(args.areas.as_deref(), file.areas.as_deref(), "--areas")?;
    let out = config::require_path(args.out.as_deref(), file.out_dir.as_deref(), "--out")?;
    let as_of = args
        .as_of
        .or(file.as_of)
        .ok_or_else(|| CliError::usage("missing required input: --as-of"))?;
    let column_map = config::resolve_column_map(args.column_map.as_deref(), file)?;

    let permits = super::load_permits(&permits_path, &column_map, &GeoBounds::nyc())?;
    let active = filter_active(&permits.permits, as_of);
    let areas = super::load_areas(&areas_path, &args.area_property)?;
    let factors = impact_factor(&active, &areas, as_of);

    let mut csv = String::from("area_id,summed_age_days,permit_count\n");
    for f in &factors {
        csv.push_str(&format!(
            "{},{},{}\n",
            f.area_id, f.summed_age_days, f.permit_count
        ));
    }
    let top = factors.iter().max_by_key(|f| f.summed_age_days).map(|f| {
        format!(
            "{} ({} days over {} permits)",
            f.area_id, f.summed_age_days, f.permit_count
        )
    });
    println!(
        "{} areas, {} active permits; highest impact: {}",
        areas.areas().len(),
        active.len(),
        top.unwrap_or_else(|| "n/a".into())
    );

    super::write_artifact(&out, "impact.csv", &csv)?;
    let geojson = factors_to_geojson(&areas, &factors);
    super::write_artifact(&out, "impact.geojson", &serde_json::to_string(&geojson)?)?;
    Ok(())
}
