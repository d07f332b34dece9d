//! Parsing and validation of the two input datasets: per-frame detector
//! output (JSONL or CSV) and the municipal permit registry (CSV).
//!
//! Frame files can be large (tens of millions of lines), so parsing is
//! streaming: one line in, one validated record out, with memory
//! proportional to the number of surviving records. Invalid lines are
//! counted and a sample is kept for diagnostics; the batch fails hard only
//! when more than a configurable fraction of lines is malformed or a
//! frame id repeats.

use crate::geo::{GeoBounds, GeoPoint, Heading};
use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{hash_map::Entry, BTreeMap, HashMap};
use std::io::{BufRead, Read};
use thiserror::Error;

pub mod fetch;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required columns: {}", missing.join(", "))]
    MissingColumns { missing: Vec<String> },
    #[error("duplicate frame_id {frame_id:?}")]
    DuplicateFrameId { frame_id: String },
    #[error(
        "{rejected} of {total} lines malformed (> {max_fraction:.2}% allowed); first offenders:\n{}",
        examples.iter().map(|e| format!("  line {}: {}", e.line, e.reason)).collect::<Vec<_>>().join("\n")
    )]
    TooManyRejects {
        rejected: usize,
        total: usize,
        max_fraction: f64,
        examples: Vec<RejectExample>,
    },
    #[error("invalid parse configuration: {0}")]
    InvalidConfig(String),
}

/// NYC borough. Ordering is fixed (used for deterministic iteration and
/// reporting).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Borough {
    Manhattan,
    Brooklyn,
    Bronx,
    Queens,
    StatenIsland,
}

impl Borough {
    pub const ALL: [Borough; 5] = [
        Borough::Manhattan,
        Borough::Brooklyn,
        Borough::Bronx,
        Borough::Queens,
        Borough::StatenIsland,
    ];

    pub fn parse(s: &str) -> Option<Borough> {
        match s.trim().to_ascii_lowercase().as_str() {
            "manhattan" => Some(Borough::Manhattan),
            "brooklyn" => Some(Borough::Brooklyn),
            "bronx" | "the bronx" => Some(Borough::Bronx),
            "queens" => Some(Borough::Queens),
            "staten island" | "statenisland" => Some(Borough::StatenIsland),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Borough::Manhattan => "Manhattan",
            Borough::Brooklyn => "Brooklyn",
            Borough::Bronx => "Bronx",
            Borough::Queens => "Queens",
            Borough::StatenIsland => "Staten Island",
        }
    }
}

/// One dashcam capture event with its detector verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub captured_at: DateTime<Utc>,
    pub location: GeoPoint,
    pub heading: Heading,
    pub detected: bool,
    /// Detector confidence; present exactly when `detected` is true.
    pub confidence: Option<f64>,
}

/// One sidewalk-shed permit from the registry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermitRecord {
    pub permit_id: String,
    pub location: GeoPoint,
    pub issued_on: NaiveDate,
    pub expires_on: NaiveDate,
    pub borough: Borough,
    pub renewed: bool,
}

/// A sample of rejected input lines plus totals.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RejectReport {
    pub total_lines: usize,
    pub rejected: usize,
    /// At most the first 10 offenders.
    pub examples: Vec<RejectExample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectExample {
    pub line: usize,
    pub reason: String,
}

const MAX_REJECT_EXAMPLES: usize = 10;

impl RejectReport {
    fn push(&mut self, line: usize, reason: String) {
        self.rejected += 1;
        if self.examples.len() < MAX_REJECT_EXAMPLES {
            self.examples.push(RejectExample { line, reason });
        }
    }
}

/// The loaded, validated, chronologically sorted frame dataset.
#[derive(Debug, Clone)]
pub struct DetectionDataset {
    /// Sorted by `(captured_at, frame_id)`.
    pub frames: Vec<FrameRecord>,
    /// SHA-256 over the canonical serialization of the sorted records, so
    /// any permutation of the same input lines hashes identically.
    pub source_digest: String,
    pub rejects: RejectReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    Jsonl,
    Csv,
}

/// Knobs for frame parsing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameParseConfig {
    /// Detections below this confidence are demoted to non-detections at
    /// ingest, keeping downstream stages agnostic of detector calibration.
    pub confidence_threshold: f64,
    pub bounds: GeoBounds,
    /// Optional inclusive study window; records outside it are rejected.
    pub study_window: Option<(DateTime<Utc>, DateTime<Utc>)>,
    /// Reject fraction above which parsing fails hard.
    pub max_reject_fraction: f64,
}

impl Default for FrameParseConfig {
    fn default() -> Self {
        FrameParseConfig {
            confidence_threshold: 0.85,
            bounds: GeoBounds::nyc(),
            study_window: None,
            max_reject_fraction: 0.01,
        }
    }
}

/// Wire shape of one frame line (identical field names in JSONL and CSV).
#[derive(Debug, Deserialize)]
struct RawFrame {
    frame_id: String,
    captured_at: String,
    lat: f64,
    lon: f64,
    heading_deg: f64,
    detected: bool,
    #[serde(default)]
    confidence: Option<f64>,
}

const FRAME_COLUMNS: [&str; 7] = [
    "frame_id",
    "captured_at",
    "lat",
    "lon",
    "heading_deg",
    "detected",
    "confidence",
];

fn validate_frame(raw: RawFrame, cfg: &FrameParseConfig) -> Result<FrameRecord, String> {
    if raw.frame_id.is_empty() {
        return Err("empty frame_id".into());
    }
    let captured_at = DateTime::parse_from_rfc3339(&raw.captured_at)
        .map_err(|e| format!("bad captured_at {:?}: {e}", raw.captured_at))?
        .with_timezone(&Utc);
    if let Some((start, end)) = cfg.study_window {
        if captured_at < start || captured_at > end {
            return Err(format!("captured_at {captured_at} outside study window"));
        }
    }
    let location = GeoPoint::new(raw.lat, raw.lon).map_err(|e| format!("bad coordinates: {e}"))?;
    if !cfg.bounds.contains(location) {
        return Err(format!(
            "coordinates ({}, {}) outside bounds ({})",
            raw.lat, raw.lon, cfg.bounds
        ));
    }
    let heading = Heading::new(raw.heading_deg).map_err(|e| format!("bad heading: {e}"))?;
    let (detected, confidence) = match (raw.detected, raw.confidence) {
        (true, Some(c)) if (0.0..=1.0).contains(&c) => {
            if c < cfg.confidence_threshold {
                (false, None) // demoted
            } else {
                (true, Some(c))
            }
        }
        (true, Some(c)) => return Err(format!("confidence {c} outside [0, 1]")),
        (true, None) => return Err("detected=true without confidence".into()),
        (false, Some(_)) => return Err("confidence present on a non-detection".into()),
        (false, None) => (false, None),
    };
    Ok(FrameRecord {
        frame_id: raw.frame_id,
        captured_at,
        location,
        heading,
        detected,
        confidence,
    })
}

/// Parse a frame stream, validate every line, sort, and digest.
pub fn parse_frames<R: BufRead>(
    reader: R,
    format: FrameFormat,
    cfg: &FrameParseConfig,
) -> Result<DetectionDataset, IngestError> {
    if !(0.0..=1.0).contains(&cfg.max_reject_fraction) {
        return Err(IngestError::InvalidConfig(format!(
            "max_reject_fraction {} outside [0, 1]",
            cfg.max_reject_fraction
        )));
    }
    let mut frames: Vec<FrameRecord> = Vec::new();
    let mut rejects = RejectReport::default();
    let mut seen: HashMap<String, ()> = HashMap::new();

    let mut accept = |record: FrameRecord| -> Result<(), IngestError> {
        match seen.entry(record.frame_id.clone()) {
            Entry::Occupied(e) => Err(IngestError::DuplicateFrameId {
                frame_id: e.key().clone(),
            }),
            Entry::Vacant(e) => {
                e.insert(());
                frames.push(record);
                Ok(())
            }
        }
    };

    match format {
        FrameFormat::Jsonl => {
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                rejects.total_lines += 1;
                let parsed: Result<RawFrame, _> = serde_json::from_str(&line);
                match parsed {
                    Ok(raw) => match validate_frame(raw, cfg) {
                        Ok(rec) => accept(rec)?,
                        Err(reason) => rejects.push(idx + 1, reason),
                    },
                    Err(e) => rejects.push(idx + 1, format!("bad json: {e}")),
                }
            }
        }
        FrameFormat::Csv => {
            let mut csv_reader = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(reader);
            let headers: csv::StringRecord = csv_reader.headers()?.iter().map(strip_bom).collect();
            csv_reader.set_headers(headers.clone());
            let missing: Vec<String> = FRAME_COLUMNS
                .iter()
                .filter(|c| !headers.iter().any(|h| h == **c))
                .map(|c| c.to_string())
                .collect();
            // confidence may be an empty field but the column must exist
            if !missing.is_empty() {
                return Err(IngestError::MissingColumns { missing });
            }
            for result in csv_reader.deserialize::<RawFrame>() {
                rejects.total_lines += 1;
                let line = rejects.total_lines + 1; // + header line
                match result {
                    Ok(raw) => match validate_frame(raw, cfg) {
                        Ok(rec) => accept(rec)?,
                        Err(reason) => rejects.push(line, reason),
                    },
                    Err(e) => rejects.push(line, format!("bad row: {e}")),
                }
            }
        }
    }

    if rejects.total_lines > 0 {
        let fraction = rejects.rejected as f64 / rejects.total_lines as f64;
        if fraction > cfg.max_reject_fraction {
            return Err(IngestError::TooManyRejects {
                rejected: rejects.rejected,
                total: rejects.total_lines,
                max_fraction: cfg.max_reject_fraction * 100.0,
                examples: rejects.examples,
            });
        }
    }

    frames.sort_by(|a, b| {
        a.captured_at
            .cmp(&b.captured_at)
            .then_with(|| a.frame_id.cmp(&b.frame_id))
    });
    let source_digest = digest_frames(&frames);
    Ok(DetectionDataset {
        frames,
        source_digest,
        rejects,
    })
}

fn digest_frames(frames: &[FrameRecord]) -> String {
    let mut hasher = Sha256::new();
    for f in frames {
        let conf = match f.confidence {
            Some(c) => c.to_string(),
            None => "-".to_string(),
        };
        let line = format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            f.frame_id,
            f.captured_at.to_rfc3339_opts(SecondsFormat::Millis, true),
            f.location.lat,
            f.location.lon,
            f.heading.degrees(),
            f.detected,
            conf,
        );
        hasher.update(line.as_bytes());
    }
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Column-name mapping from a permit CSV to [`PermitRecord`] fields. The
/// defaults follow the DOB Active Sheds export; a JSON file with the same
/// field names overrides them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PermitColumnMap {
    pub permit_id: String,
    pub lat: String,
    pub lon: String,
    pub issued_on: String,
    pub expires_on: String,
    pub borough: String,
    pub renewed: String,
    /// Optional column carrying the equipment type.
    pub permit_type: Option<String>,
    /// When set (and `permit_type` names a column), only rows whose type
    /// is in this list are kept.
    pub include_types: Option<Vec<String>>,
}

impl Default for PermitColumnMap {
    fn default() -> Self {
        PermitColumnMap {
            permit_id: "Job Number".into(),
            lat: "Latitude Point".into(),
            lon: "Longitude Point".into(),
            issued_on: "First Permit Date".into(),
            expires_on: "Expiration Date".into(),
            borough: "Borough Name".into(),
            renewed: "Permit Renewed".into(),
            permit_type: None,
            include_types: None,
        }
    }
}

/// Result of a permit parse: deduplicated records sorted by permit id,
/// plus reject accounting.
#[derive(Debug, Clone)]
pub struct PermitParse {
    pub permits: Vec<PermitRecord>,
    pub rejects: RejectReport,
    /// Rows dropped by the `include_types` filter (not counted as rejects).
    pub filtered_by_type: usize,
}

/// Drop a leading UTF-8 byte-order mark (spreadsheet and open-data CSV
/// exports often carry one, which would spoil exact header matching).
fn strip_bom(s: &str) -> &str {
    s.strip_prefix('\u{feff}').unwrap_or(s)
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    let s = s.trim();
    for fmt in ["%Y-%m-%d", "%m/%d/%Y", "%Y/%m/%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
            return Ok(d);
        }
    }
    // timestamps are tolerated; keep the date part
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.date_naive());
    }
    Err(format!("unparseable date {s:?}"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "y" | "1" => Ok(true),
        "false" | "no" | "n" | "0" | "" => Ok(false),
        other => Err(format!("unparseable boolean {other:?}")),
    }
}

/// Parse a permit CSV. Rows with unparseable coordinates or dates are
/// excluded and counted; duplicate permit ids are collapsed keeping the
/// latest expiration.
pub fn parse_permits<R: Read>(
    reader: R,
    map: &PermitColumnMap,
    bounds: &GeoBounds,
) -> Result<PermitParse, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers: csv::StringRecord = csv_reader.headers()?.iter().map(strip_bom).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let mut required: Vec<(&str, &str)> = vec![
        ("permit_id", map.permit_id.as_str()),
        ("lat", map.lat.as_str()),
        ("lon", map.lon.as_str()),
        ("issued_on", map.issued_on.as_str()),
        ("expires_on", map.expires_on.as_str()),
        ("borough", map.borough.as_str()),
        ("renewed", map.renewed.as_str()),
    ];
    if let Some(tc) = &map.permit_type {
        required.push(("permit_type", tc.as_str()));
    }
    let missing: Vec<String> = required
        .iter()
        .filter(|(_, col)| find(col).is_none())
        .map(|(_, col)| col.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::MissingColumns { missing });
    }
    let idx = |name: &str| find(name).unwrap();
    let (i_id, i_lat, i_lon) = (idx(&map.permit_id), idx(&map.lat), idx(&map.lon));
    let (i_iss, i_exp) = (idx(&map.issued_on), idx(&map.expires_on));
    let (i_boro, i_ren) = (idx(&map.borough), idx(&map.renewed));
    let i_type = map.permit_type.as_deref().map(idx);

    let mut rejects = RejectReport::default();
    let mut filtered_by_type = 0usize;
    let mut by_id: BTreeMap<String, PermitRecord> = BTreeMap::new();

    for (row_idx, result) in csv_reader.records().enumerate() {
        rejects.total_lines += 1;
        let line = row_idx + 2; // header is line 1
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                rejects.push(line, format!("bad row: {e}"));
                continue;
            }
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        match parse_permit_row(
            field(i_id),
            field(i_lat),
            field(i_lon),
            field(i_iss),
            field(i_exp),
            field(i_boro),
            field(i_ren),
            bounds,
        ) {
            Ok(permit) => {
                if let (Some(ti), Some(allow)) = (i_type, &map.include_types) {
                    let ty = field(ti);
                    if !allow.iter().any(|a| a.eq_ignore_ascii_case(ty.trim())) {
                        filtered_by_type += 1;
                        continue;
                    }
                }
                match by_id.entry(permit.permit_id.clone()) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(permit);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        if permit.expires_on > e.get().expires_on {
                            e.insert(permit);
                        }
                    }
                }
            }
            Err(reason) => rejects.push(line, reason),
        }
    }

    Ok(PermitParse {
        permits: by_id.into_values().collect(),
        rejects,
        filtered_by_type,
    })
}

#[allow(clippy::too_many_arguments)]
fn parse_permit_row(
    id: &str,
    lat: &str,
    lon: &str,
    issued: &str,
    expires: &str,
    borough: &str,
    renewed: &str,
    bounds: &GeoBounds,
) -> Result<PermitRecord, String> {
    if id.trim().is_empty() {
        return Err("empty permit id".into());
    }
    let lat: f64 = lat
        .trim()
        .parse()
        .map_err(|_| format!("bad latitude {lat:?}"))?;
    let lon: f64 = lon
        .trim()
        .parse()
        .map_err(|_| format!("bad longitude {lon:?}"))?;
    let location = GeoPoint::new(lat, lon).map_err(|e| format!("bad coordinates: {e}"))?;
    if !bounds.contains(location) {
        return Err(format!(
            "coordinates ({lat}, {lon}) outside bounds ({bounds})"
        ));
    }
    let issued_on = parse_date(issued)?;
    let expires_on = parse_date(expires)?;
    if issued_on > expires_on {
        return Err(format!(
            "issued_on {issued_on} after expires_on {expires_on}"
        ));
    }
    let borough = Borough::parse(borough).ok_or_else(|| format!("unknown borough {borough:?}"))?;
    let renewed = parse_bool(renewed)?;
    Ok(PermitRecord {
        permit_id: id.trim().to_string(),
        location,
        issued_on,
        expires_on,
        borough,
        renewed,
    })
}

/// Keep permits whose expiration is on or after `as_of`.
pub fn filter_active(permits: &[PermitRecord], as_of: NaiveDate) -> Vec<PermitRecord> {
    permits
        .iter()
        .filter(|p| p.expires_on >= as_of)
        .cloned()
        .collect()
}
