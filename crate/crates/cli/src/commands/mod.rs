//! One module per subcommand plus the shared input/output plumbing.

pub mod curate;
pub mod evaluate;
pub mod fetch;
pub mod impact;
pub mod simulate;
pub mod tag;
pub mod thresholds;
pub mod validate;

use crate::error::CliError;
use longwatch_core::boundary::{AreaSet, BoroughMap};
use longwatch_core::geo::GeoBounds;
use longwatch_core::ingest::{
    parse_frames, parse_permits, DetectionDataset, FrameFormat, FrameParseConfig, PermitColumnMap,
    PermitParse,
};
use std::fs;
use std::io::BufReader;
use std::path::Path;

pub fn load_frames(
    path: &Path,
    format: FrameFormat,
    cfg: &FrameParseConfig,
) -> Result<DetectionDataset, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open frames file {}: {e}", path.display())))?;
    parse_frames(BufReader::new(file), format, cfg)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn load_permits(
    path: &Path,
    map: &PermitColumnMap,
    bounds: &GeoBounds,
) -> Result<PermitParse, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open permits file {}: {e}", path.display())))?;
    parse_permits(BufReader::new(file), map, bounds)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn load_boroughs(path: &Path) -> Result<BoroughMap, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::data(format!("cannot read boundary file {}: {e}", path.display()))
    })?;
    BoroughMap::parse(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn load_areas(path: &Path, id_property: &str) -> Result<AreaSet, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read area file {}: {e}", path.display())))?;
    AreaSet::parse(&text, id_property)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Create the output directory and write one artifact into it.
pub fn write_artifact(out_dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn to_pretty_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}
