//! Run configuration with the precedence chain
//! flags > config file > environment > built-in defaults.
//!
//! The config file is JSON; every field is optional and anything omitted
//! falls through to the next source. Built-in defaults reproduce the
//! reference deployment: 80-ft cells, 60-ft displacement, 320-ft permit
//! regions, 120-ft visibility, window 20, threshold 6, confidence 0.85,
//! 100-m curation radius, base recall 0.5676, base precision 0.9329.

use crate::error::CliError;
use chrono::NaiveDate;
use longwatch_core::curation::CurationConfig;
use longwatch_core::geo::GridConfig;
use longwatch_core::ingest::fetch::APP_TOKEN_ENV;
use longwatch_core::ingest::{FrameFormat, FrameParseConfig, PermitColumnMap};
use longwatch_core::tagging::TaggingParams;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Optional overrides loaded from `--config <file.json>`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub frames: Option<PathBuf>,
    pub frames_format: Option<String>,
    pub permits: Option<PathBuf>,
    pub column_map: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    pub areas: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub as_of: Option<NaiveDate>,
    pub seed: Option<u64>,
    pub confidence_threshold: Option<f64>,
    pub base_recall: Option<f64>,
    pub base_precision: Option<f64>,
    pub app_token: Option<String>,
    pub grid: Option<GridConfig>,
    pub tagging: Option<TaggingPatch>,
    pub curation: Option<CurationPatch>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggingPatch {
    pub window: Option<usize>,
    pub threshold: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationPatch {
    pub max_distance_m: Option<f64>,
    pub angle_tolerance_deg: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad config file {}: {e}", path.display())))
    }
}

/// Grid overrides exposed as individual flags.
#[derive(Debug, Clone, Copy, Default, clap::Args)]
pub struct GridArgs {
    /// Projection origin latitude (degrees).
    #[arg(long)]
    pub origin_lat: Option<f64>,
    /// Projection origin longitude (degrees).
    #[arg(long)]
    pub origin_lon: Option<f64>,
    /// Grid cell size (feet).
    #[arg(long)]
    pub cell_size_ft: Option<f64>,
    /// Observation displacement along the camera heading (feet).
    #[arg(long)]
    pub displacement_ft: Option<f64>,
    /// Permit grouping region side (feet).
    #[arg(long)]
    pub region_size_ft: Option<f64>,
    /// Camera-to-structure visibility radius (feet).
    #[arg(long)]
    pub visibility_radius_ft: Option<f64>,
}

/// Rolling-window overrides.
#[derive(Debug, Clone, Copy, Default, clap::Args)]
pub struct TaggingArgs {
    /// Rolling window length (observations).
    #[arg(long)]
    pub window: Option<usize>,
    /// Positive detections required within the window.
    #[arg(long)]
    pub threshold: Option<usize>,
}

pub fn resolve_grid(args: &GridArgs, file: &FileConfig) -> Result<GridConfig, CliError> {
    let mut grid = file.grid.unwrap_or_default();
    if let Some(lat) = args.origin_lat {
        grid.origin.lat = lat;
    }
    if let Some(lon) = args.origin_lon {
        grid.origin.lon = lon;
    }
    if let Some(v) = args.cell_size_ft {
        grid.cell_size_ft = v;
    }
    if let Some(v) = args.displacement_ft {
        grid.displacement_ft = v;
    }
    if let Some(v) = args.region_size_ft {
        grid.region_size_ft = v;
    }
    if let Some(v) = args.visibility_radius_ft {
        grid.visibility_radius_ft = v;
    }
    grid.validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(grid)
}

pub fn resolve_tagging(args: &TaggingArgs, file: &FileConfig) -> Result<TaggingParams, CliError> {
    let patch = file.tagging.unwrap_or_default();
    let defaults = TaggingParams::default();
    TaggingParams::new(
        args.window.or(patch.window).unwrap_or(defaults.window),
        args.threshold
            .or(patch.threshold)
            .unwrap_or(defaults.threshold),
    )
    .map_err(|e| CliError::usage(e.to_string()))
}

pub fn resolve_curation(
    max_distance_m: Option<f64>,
    angle_tolerance_deg: Option<f64>,
    file: &FileConfig,
) -> Result<CurationConfig, CliError> {
    let patch = file.curation.unwrap_or_default();
    let defaults = CurationConfig::default();
    let cfg = CurationConfig {
        max_distance_m: max_distance_m
            .or(patch.max_distance_m)
            .unwrap_or(defaults.max_distance_m),
        angle_tolerance_deg: angle_tolerance_deg
            .or(patch.angle_tolerance_deg)
            .unwrap_or(defaults.angle_tolerance_deg),
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

pub fn resolve_frame_parse(
    confidence_threshold: Option<f64>,
    grid: &GridConfig,
    file: &FileConfig,
) -> FrameParseConfig {
    FrameParseConfig {
        confidence_threshold: confidence_threshold
            .or(file.confidence_threshold)
            .unwrap_or(0.85),
        bounds: grid.bounds,
        ..Default::default()
    }
}

pub fn resolve_format(flag: Option<&str>, file: &FileConfig) -> Result<FrameFormat, CliError> {
    let name = flag
        .map(str::to_string)
        .or_else(|| file.frames_format.clone())
        .unwrap_or_else(|| "jsonl".to_string());
    match name.to_ascii_lowercase().as_str() {
        "jsonl" => Ok(FrameFormat::Jsonl),
        "csv" => Ok(FrameFormat::Csv),
        other => Err(CliError::usage(format!(
            "unknown frame format {other:?} (want jsonl or csv)"
        ))),
    }
}

pub fn resolve_column_map(
    flag: Option<&Path>,
    file: &FileConfig,
) -> Result<PermitColumnMap, CliError> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| file.column_map.clone());
    let Some(path) = path else {
        return Ok(PermitColumnMap::default());
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::data(format!("cannot read column map {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("bad column map {}: {e}", path.display())))
}

pub fn resolve_app_token(flag: Option<String>, file: &FileConfig) -> Option<String> {
    flag.or_else(|| file.app_token.clone())
        .or_else(|| std::env::var(APP_TOKEN_ENV).ok())
}

/// Pick a required path: flag first, then config file.
pub fn require_path(
    flag: Option<&Path>,
    from_file: Option<&Path>,
    what: &str,
) -> Result<PathBuf, CliError> {
    flag.or(from_file)
        .map(Path::to_path_buf)
        .ok_or_else(|| CliError::usage(format!("missing required input: {what}")))
}
