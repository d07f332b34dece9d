//! Over-time confirmation: displace each observation toward the camera's
//! view, bucket it into a grid cell, and confirm cells whose rolling
//! window of recent observations carries enough positives.
//!
//! Two confirmation readings are exposed per cell: whether *any* trailing
//! window reached the threshold (with the timestamp of the earliest such
//! window, which is what a confirmation-latency analysis needs), and
//! whether the *final* window does. Histories shorter than the window are
//! never confirmed and are flagged as insufficient coverage.

use crate::boundary::{feature, feature_collection};
use crate::geo::{displace_along_heading, GeoError, GridCell, GridConfig, PlanePoint};
use crate::ingest::{DetectionDataset, FrameRecord};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaggingError {
    #[error("invalid tagging parameters: threshold {threshold} out of range [1, {window}]")]
    InvalidParams { window: usize, threshold: usize },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// One frame's contribution to a cell history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub captured_at: DateTime<Utc>,
    pub detected: bool,
    pub frame_id: String,
}

/// Chronologically ordered observations that landed in one cell.
#[derive(Debug, Clone)]
pub struct CellHistory {
    pub cell: GridCell,
    /// Sorted by `(captured_at, frame_id)`, no duplicate frame ids.
    pub observations: Vec<Observation>,
}

/// Rolling-window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaggingParams {
    pub window: usize,
    pub threshold: usize,
}

impl Default for TaggingParams {
    fn default() -> Self {
        TaggingParams {
            window: 20,
            threshold: 6,
        }
    }
}

impl TaggingParams {
    pub fn new(window: usize, threshold: usize) -> Result<TaggingParams, TaggingError> {
        if window == 0 || threshold == 0 || threshold > window {
            return Err(TaggingError::InvalidParams { window, threshold });
        }
        Ok(TaggingParams { window, threshold })
    }

    pub fn validate(&self) -> Result<(), TaggingError> {
        TaggingParams::new(self.window, self.threshold).map(|_| ())
    }
}

/// Per-cell confirmation outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellVerdict {
    pub cell: GridCell,
    /// Some trailing window reached the threshold.
    pub confirmed: bool,
    /// Timestamp of the earliest observation whose trailing window reached
    /// the threshold; present exactly when `confirmed`.
    pub first_confirmed_at: Option<DateTime<Utc>>,
    /// The window ending at the final observation reached the threshold.
    pub last_window_confirmed: bool,
    /// History shorter than the window: cannot be confirmed.
    pub insufficient_coverage: bool,
    pub observation_count: usize,
    pub positive_count: usize,
}

/// Where a frame's evidence lands: the projected camera position pushed
/// `displacement_ft` along the camera heading.
pub fn observation_point(frame: &FrameRecord, cfg: &GridConfig) -> Result<PlanePoint, GeoError> {
    let camera = cfg.project(frame.location)?;
    displace_along_heading(camera, frame.heading, cfg.displacement_ft)
}

/// Bucket every frame of a sorted dataset into its cell. Per-cell order
/// inherits the dataset's global `(captured_at, frame_id)` order.
pub fn build_histories(
    dataset: &DetectionDataset,
    cfg: &GridConfig,
) -> Result<BTreeMap<GridCell, CellHistory>, TaggingError> {
    let mut histories: BTreeMap<GridCell, CellHistory> = BTreeMap::new();
    for frame in &dataset.frames {
        let point = observation_point(frame, cfg)?;
        let cell = cfg.cell_of(point);
        let history = histories.entry(cell).or_insert_with(|| CellHistory {
            cell,
            observations: Vec::new(),
        });
        history.observations.push(Observation {
            captured_at: frame.captured_at,
            detected: frame.detected,
            frame_id: frame.frame_id.clone(),
        });
    }
    Ok(histories)
}

/// Evaluate the rolling window over one cell history.
pub fn confirm_cell(history: &CellHistory, params: &TaggingParams) -> CellVerdict {
    let obs = &history.observations;
    let n = obs.len();
    let positive_count = obs.iter().filter(|o| o.detected).count();
    let mut verdict = CellVerdict {
        cell: history.cell,
        confirmed: false,
        first_confirmed_at: None,
        last_window_confirmed: false,
        insufficient_coverage: n < params.window,
        observation_count: n,
        positive_count,
    };
    if n < params.window {
        return verdict;
    }
    let mut in_window = obs[..params.window].iter().filter(|o| o.detected).count();
    let mut i = params.window - 1;
    loop {
        if in_window >= params.threshold && !verdict.confirmed {
            verdict.confirmed = true;
            verdict.first_confirmed_at = Some(obs[i].captured_at);
        }
        if i == n - 1 {
            verdict.last_window_confirmed = in_window >= params.threshold;
            break;
        }
        // slide: drop the observation leaving the window, add the next
        if obs[i + 1 - params.window].detected {
            in_window -= 1;
        }
        i += 1;
        if obs[i].detected {
            in_window += 1;
        }
    }
    verdict
}

/// Full tagging pass: one verdict per non-empty cell, ordered by cell.
pub fn run_tagging(
    dataset: &DetectionDataset,
    cfg: &GridConfig,
    params: &TaggingParams,
) -> Result<Vec<CellVerdict>, TaggingError> {
    params.validate()?;
    let histories = build_histories(dataset, cfg)?;
    Ok(histories
        .values()
        .map(|h| confirm_cell(h, params))
        .collect())
}

fn timestamp(t: &Option<DateTime<Utc>>) -> String {
    t.map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true))
        .unwrap_or_default()
}

/// Verdicts as CSV, one row per cell.
pub fn verdicts_to_csv(verdicts: &[CellVerdict]) -> String {
    let mut out = String::from(
        "ix,iy,confirmed,last_window_confirmed,insufficient_coverage,first_confirmed_at,observation_count,positive_count\n",
    );
    for v in verdicts {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            v.cell.ix,
            v.cell.iy,
            v.confirmed,
            v.last_window_confirmed,
            v.insufficient_coverage,
            timestamp(&v.first_confirmed_at),
            v.observation_count,
            v.positive_count,
        ));
    }
    out
}

/// Verdicts as a GeoJSON FeatureCollection of cell polygons.
pub fn verdicts_to_geojson(
    verdicts: &[CellVerdict],
    cfg: &GridConfig,
) -> Result<serde_json::Value, TaggingError> {
    let mut features = Vec::with_capacity(verdicts.len());
    for v in verdicts {
        let ring = cfg.cell_ring(v.cell)?;
        let geometry = serde_json::json!({ "type": "Polygon", "coordinates": [ring] });
        let mut props = serde_json::Map::new();
        props.insert("ix".into(), v.cell.ix.into());
        props.insert("iy".into(), v.cell.iy.into());
        props.insert("confirmed".into(), v.confirmed.into());
        props.insert(
            "last_window_confirmed".into(),
            v.last_window_confirmed.into(),
        );
        props.insert(
            "insufficient_coverage".into(),
            v.insufficient_coverage.into(),
        );
        props.insert(
            "first_confirmed_at".into(),
            timestamp(&v.first_confirmed_at).into(),
        );
        props.insert("observation_count".into(), v.observation_count.into());
        props.insert("positive_count".into(), v.positive_count.into());
        features.push(feature(geometry, props));
    }
    Ok(feature_collection(features))
}
