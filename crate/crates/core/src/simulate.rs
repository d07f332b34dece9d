//! Synthetic-world generation and Monte Carlo oracles.
//!
//! These close the loop between the analytic amplification model and the
//! implemented pipeline without any proprietary data: worlds with known
//! ground truth are generated, rendered to the same frame JSONL and
//! permit CSV the ingest stage consumes, pushed through
//! ingest -> tagging -> evaluation, and the outcome is compared against
//! the binomial prediction.
//!
//! Geometry is arranged so each structure's passes all land in one grid
//! cell: structures sit on cell centers, cameras on a ring 50-70 ft out
//! with headings within 15 degrees of the structure, so displaced
//! observation points stay within ~20 ft of the cell center. A world with
//! exactly `window` passes per structure then has the final window equal
//! to the full history, which is precisely the analytic model's setting.

use crate::amplify::{binomial_tail, AmplifyError};
use crate::evaluate::{build_report, EvaluateError, EvaluationReport};
use crate::geo::{GeoError, GridConfig, PlanePoint};
use crate::ingest::{
    parse_frames, parse_permits, FrameFormat, FrameParseConfig, IngestError, PermitColumnMap,
};
use crate::tagging::{run_tagging, TaggingError, TaggingParams};
use chrono::{DateTime, SecondsFormat, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bounds too small: need {needed} lattice sites, only {available} fit")]
    BoundsTooSmall { needed: usize, available: usize },
    #[error("invalid simulation parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Tagging(#[from] TaggingError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
    #[error(transparent)]
    Amplify(#[from] AmplifyError),
}

/// Planar rectangle holding a synthetic world, in feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneRect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl PlaneRect {
    pub fn centered(half_extent_ft: f64) -> PlaneRect {
        PlaneRect {
            min_x: -half_extent_ft,
            min_y: -half_extent_ft,
            max_x: half_extent_ft,
            max_y: half_extent_ft,
        }
    }
}

/// One synthetic structure.
#[derive(Debug, Clone, Serialize)]
pub struct Shed {
    pub location: PlanePoint,
    pub permitted: bool,
    pub permit_id: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticWorld {
    pub bounds: PlaneRect,
    pub sheds: Vec<Shed>,
    pub seed: u64,
}

/// Per-observation detector behavior.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DetectorModel {
    pub recall: f64,
    /// Chance a frame far from any structure still reports a detection.
    pub false_positive_rate: f64,
    pub visibility_ft: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            recall: 0.5676,
            false_positive_rate: 0.0,
            visibility_ft: 120.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("recall", self.recall),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(SimError::InvalidParam(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.visibility_ft <= 0.0 {
            return Err(SimError::InvalidParam(
                "visibility_ft must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Frame generation knobs beyond the detector model.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FrameGenParams {
    pub passes_per_shed: usize,
    /// Frames scattered far from every structure.
    pub background_frames: usize,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    /// Camera ring around each structure.
    pub camera_min_ft: f64,
    pub camera_max_ft: f64,
    /// Heading perturbation around the bearing toward the structure.
    pub heading_jitter_deg: f64,
}

impl Default for FrameGenParams {
    fn default() -> Self {
        FrameGenParams {
            passes_per_shed: 20,
            background_frames: 0,
            window_start: DateTime::parse_from_rfc3339("2023-08-11T00:00:00Z")
                .unwrap()
                .with_timezone(&Utc),
            window_end: DateTime::parse_from_rfc3339("2024-01-10T00:00:00Z")
                .unwrap()
                .with_timezone(&Utc),
            camera_min_ft: 50.0,
            camera_max_ft: 70.0,
            heading_jitter_deg: 15.0,
        }
    }
}

/// Separation multiple: structures sit at least `2 * region_size_ft`
/// apart so their grouping regions never overlap and per-structure
/// statistics stay independent.
fn lattice_spacing_cells(grid: &GridConfig) -> i64 {
    let min_separation = 2.0 * grid.region_size_ft;
    (min_separation / grid.cell_size_ft).floor() as i64 + 1
}

/// Place `n_permitted + n_unpermitted` structures on cell centers inside
/// `bounds`, every pair separated by more than `2 * region_size_ft`.
/// Deterministic for a given seed.
pub fn gen_world(
    n_permitted: usize,
    n_unpermitted: usize,
    bounds: PlaneRect,
    seed: u64,
    grid: &GridConfig,
) -> Result<SyntheticWorld, SimError> {
    let needed = n_permitted + n_unpermitted;
    let spacing = lattice_spacing_cells(grid);
    let s = grid.cell_size_ft;

    // the whole rectangle must unproject inside the geographic bounds,
    // otherwise the rendered files would be rejected at ingest
    for (x, y) in [
        (bounds.min_x, bounds.min_y),
        (bounds.max_x, bounds.max_y),
        (bounds.min_x, bounds.max_y),
        (bounds.max_x, bounds.min_y),
    ] {
        let corner = grid.unproject(PlanePoint::new(x, y))?;
        if !grid.bounds.contains(corner) {
            return Err(SimError::InvalidParam(format!(
                "world rectangle corner ({x}, {y}) ft falls outside the projection bounds ({})",
                grid.bounds
            )));
        }
    }

    // candidate cell centers on a coarse lattice, fully inside bounds
    let mut sites: Vec<PlanePoint> = Vec::new();
    let ix_lo = (bounds.min_x / s).ceil() as i64;
    let ix_hi = (bounds.max_x / s).floor() as i64;
    let iy_lo = (bounds.min_y / s).ceil() as i64;
    let iy_hi = (bounds.max_y / s).floor() as i64;
    let mut iy = iy_lo;
    while iy < iy_hi {
        let mut ix = ix_lo;
        while ix < ix_hi {
            sites.push(PlanePoint::new(
                (ix as f64 + 0.5) * s,
                (iy as f64 + 0.5) * s,
            ));
            ix += spacing;
        }
        iy += spacing;
    }
    if sites.len() < needed {
        return Err(SimError::BoundsTooSmall {
            needed,
            available: sites.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // partial Fisher-Yates over the lattice sites
    for i in 0..needed {
        let j = rng.random_range(i..sites.len());
        sites.swap(i, j);
    }
    let sheds = sites
        .into_iter()
        .take(needed)
        .enumerate()
        .map(|(i, location)| {
            let permitted = i < n_permitted;
            Shed {
                location,
                permitted,
                permit_id: permitted.then(|| format!("SYN-{i:06}")),
            }
        })
        .collect();
    Ok(SyntheticWorld {
        bounds,
        sheds,
        seed,
    })
}

/// Render the permitted structures as a permit CSV in the registry schema
/// (default column names), active well past the observation window.
pub fn world_permit_csv(world: &SyntheticWorld, grid: &GridConfig) -> Result<String, SimError> {
    let map = PermitColumnMap::default();
    let mut out = format!(
        "{},{},{},{},{},{},{}\n",
        map.permit_id, map.lat, map.lon, map.issued_on, map.expires_on, map.borough, map.renewed
    );
    for shed in world.sheds.iter().filter(|s| s.permitted) {
        let location = grid.unproject(shed.location)?;
        out.push_str(&format!(
            "{},{:.7},{:.7},2023-01-01,2030-01-01,Manhattan,false\n",
            shed.permit_id.as_ref().expect("permitted sheds carry ids"),
            location.lat,
            location.lon,
        ));
    }
    Ok(out)
}

fn bernoulli(rng: &mut ChaCha8Rng, rate: f64) -> bool {
    rate > 0.0 && (rate >= 1.0 || rng.random::<f64>() < rate)
}

/// Generate the frame JSONL for a world: `passes_per_shed` sightings per
/// structure from the camera ring, plus background frames far from every
/// structure. Deterministic for a given seed; the output parses through
/// the frame ingester with zero rejects.
pub fn gen_frames(
    world: &SyntheticWorld,
    params: &FrameGenParams,
    detector: &DetectorModel,
    seed: u64,
    grid: &GridConfig,
) -> Result<String, SimError> {
    detector.validate()?;
    if params.camera_min_ft <= 0.0
        || params.camera_max_ft <= params.camera_min_ft
        || params.camera_max_ft > detector.visibility_ft
    {
        return Err(SimError::InvalidParam(format!(
            "camera ring [{}, {}) must be a nonempty range inside (0, visibility {}]",
            params.camera_min_ft, params.camera_max_ft, detector.visibility_ft
        )));
    }
    if params.window_end <= params.window_start {
        return Err(SimError::InvalidParam("empty timestamp window".into()));
    }
    if !params.heading_jitter_deg.is_finite() || params.heading_jitter_deg < 0.0 {
        return Err(SimError::InvalidParam(format!(
            "heading_jitter_deg must be nonnegative, got {}",
            params.heading_jitter_deg
        )));
    }
    let start_ms = params.window_start.timestamp_millis();
    let end_ms = params.window_end.timestamp_millis();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = String::new();
    let mut frame_counter = 0usize;
    let mut emit = |rng: &mut ChaCha8Rng,
                    lines: &mut String,
                    camera: PlanePoint,
                    heading_deg: f64,
                    detected: bool|
     -> Result<(), SimError> {
        let location = grid.unproject(camera)?;
        let at_ms = rng.random_range(start_ms..end_ms);
        let at = DateTime::<Utc>::from_timestamp_millis(at_ms)
            .expect("window timestamps are valid")
            .to_rfc3339_opts(SecondsFormat::Millis, true);
        let heading = heading_deg.rem_euclid(360.0);
        let id = format!("SYN-{:010}", frame_counter);
        frame_counter += 1;
        if detected {
            // stay above the ingest confidence threshold so the demotion
            // rule cannot silently change the effective recall
            let confidence = 0.86 + 0.13 * rng.random::<f64>();
            lines.push_str(&format!(
                r#"{{"frame_id":"{id}","captured_at":"{at}","lat":{:.7},"lon":{:.7},"heading_deg":{:.3},"detected":true,"confidence":{:.4}}}"#,
                location.lat, location.lon, heading, confidence
            ));
        } else {
            lines.push_str(&format!(
                r#"{{"frame_id":"{id}","captured_at":"{at}","lat":{:.7},"lon":{:.7},"heading_deg":{:.3},"detected":false}}"#,
                location.lat, location.lon, heading
            ));
        }
        lines.push('\n');
        Ok(())
    };

    for shed in &world.sheds {
        for _ in 0..params.passes_per_shed {
            let d = rng.random_range(params.camera_min_ft..params.camera_max_ft);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let camera = PlanePoint::new(
                shed.location.x_ft + d * angle.sin(),
                shed.location.y_ft + d * angle.cos(),
            );
            // exact bearing back toward the structure, plus jitter
            let toward = (shed.location.x_ft - camera.x_ft)
                .atan2(shed.location.y_ft - camera.y_ft)
                .to_degrees();
            let jitter = rng.random_range(-params.heading_jitter_deg..=params.heading_jitter_deg);
            let detected = bernoulli(&mut rng, detector.recall);
            emit(&mut rng, &mut lines, camera, toward + jitter, detected)?;
        }
    }

    // background traffic: uniform in bounds but outside every structure's
    // grouping region
    let exclusion = grid.region_size_ft;
    let mut placed = 0usize;
    let mut attempts = 0usize;
    while placed < params.background_frames {
        attempts += 1;
        if attempts > params.background_frames * 1000 + 1000 {
            return Err(SimError::InvalidParam(
                "bounds too crowded to place background frames".into(),
            ));
        }
        let p = PlanePoint::new(
            rng.random_range(world.bounds.min_x..world.bounds.max_x),
            rng.random_range(world.bounds.min_y..world.bounds.max_y),
        );
        if world
            .sheds
            .iter()
            .any(|s| s.location.distance_ft(p) < exclusion)
        {
            continue;
        }
        let heading = rng.random_range(0.0..360.0);
        let detected = bernoulli(&mut rng, detector.false_positive_rate);
        emit(&mut rng, &mut lines, p, heading, detected)?;
        placed += 1;
    }
    Ok(lines)
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer: decorrelates per-draw streams so draws can be
    // sharded in any way and still reproduce
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Empirical fraction of experiments in which a window of Bernoulli
/// trials reaches the threshold. Each draw derives its own generator from
/// `(seed, draw index)`, so the result is identical however the draws are
/// sharded.
pub fn monte_carlo_tail(
    success_rate: f64,
    window: usize,
    threshold: usize,
    draws: usize,
    seed: u64,
) -> Result<f64, SimError> {
    if draws == 0 {
        return Err(SimError::InvalidParam("draws must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&success_rate) {
        return Err(SimError::InvalidParam(format!(
            "success_rate {success_rate} outside [0, 1]"
        )));
    }
    if threshold == 0 || threshold > window {
        return Err(SimError::InvalidParam(format!(
            "threshold {threshold} outside [1, {window}]"
        )));
    }
    let mut hits = 0usize;
    for i in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
        let mut successes = 0usize;
        for _ in 0..window {
            if bernoulli(&mut rng, success_rate) {
                successes += 1;
                if successes >= threshold {
                    break;
                }
            }
        }
        if successes >= threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / draws as f64)
}

/// Inputs for one full-pipeline check.
#[derive(Debug, Clone, Serialize)]
pub struct EndToEndParams {
    pub n_permitted: usize,
    pub n_unpermitted: usize,
    pub bounds: PlaneRect,
    pub seed: u64,
    pub frame_gen: FrameGenParams,
    pub detector: DetectorModel,
    pub tagging: TaggingParams,
}

impl Default for EndToEndParams {
    fn default() -> Self {
        EndToEndParams {
            n_permitted: 400,
            n_unpermitted: 100,
            bounds: PlaneRect::centered(12_000.0),
            seed: 42,
            frame_gen: FrameGenParams::default(),
            detector: DetectorModel::default(),
            tagging: TaggingParams::default(),
        }
    }
}

/// Outcome of [`end_to_end_check`].
#[derive(Debug, Clone, Serialize)]
pub struct EndToEndReport {
    pub sheds_total: usize,
    pub sheds_confirmed: usize,
    pub empirical_fraction: f64,
    pub analytic_recall: f64,
    pub std_error: f64,
    /// |empirical - analytic|
    pub delta: f64,
    /// Acceptance band: 4 binomial standard errors.
    pub tolerance: f64,
    pub within_tolerance: bool,
    pub planted_unpermitted: usize,
    pub recovered_unpermitted_clusters: usize,
    /// Exact recovery is only guaranteed at detector recall 1.
    pub unpermitted_recovered_exactly: Option<bool>,
    pub identities_ok: bool,
    pub evaluation: EvaluationReport,
    pub passed: bool,
}

/// The input files one [`EndToEndParams`] world renders to: exactly what
/// [`end_to_end_check`] feeds its pipeline, and a ready-made sandbox
/// dataset for the file-based commands.
pub fn render_world_files(
    params: &EndToEndParams,
    grid: &GridConfig,
) -> Result<(String, String), SimError> {
    let world = gen_world(
        params.n_permitted,
        params.n_unpermitted,
        params.bounds,
        params.seed,
        grid,
    )?;
    let permit_csv = world_permit_csv(&world, grid)?;
    let jsonl = gen_frames(
        &world,
        &params.frame_gen,
        &params.detector,
        params.seed ^ 0x5EED,
        grid,
    )?;
    Ok((permit_csv, jsonl))
}

/// Generate a world, render its files, run the whole pipeline through
/// ingest, tagging, and evaluation, and compare the per-structure
/// confirmation rate with the analytic amplified recall.
///
/// Requires a zero false-positive rate: the analytic recall model only
/// describes frames that actually observe a structure.
pub fn end_to_end_check(params: &EndToEndParams) -> Result<EndToEndReport, SimError> {
    if params.detector.false_positive_rate != 0.0 {
        return Err(SimError::InvalidParam(
            "recall check requires false_positive_rate = 0".into(),
        ));
    }
    params.tagging.validate()?;
    let grid = GridConfig::default();
    let world = gen_world(
        params.n_permitted,
        params.n_unpermitted,
        params.bounds,
        params.seed,
        &grid,
    )?;

    // world -> files -> ingest: the pipeline sees only its public inputs
    let permit_csv = world_permit_csv(&world, &grid)?;
    let jsonl = gen_frames(
        &world,
        &params.frame_gen,
        &params.detector,
        params.seed ^ 0x5EED,
        &grid,
    )?;
    let dataset = parse_frames(
        jsonl.as_bytes(),
        FrameFormat::Jsonl,
        &FrameParseConfig::default(),
    )?;
    let permits = parse_permits(
        permit_csv.as_bytes(),
        &PermitColumnMap::default(),
        &grid.bounds,
    )?;

    let verdicts = run_tagging(&dataset, &grid, &params.tagging)?;

    // per-structure confirmation, final-window semantics
    let mut confirmed = 0usize;
    for shed in &world.sheds {
        let cell = grid.cell_of(shed.location);
        if verdicts
            .iter()
            .any(|v| v.cell == cell && v.last_window_confirmed)
        {
            confirmed += 1;
        }
    }
    let sheds_total = world.sheds.len();
    let empirical = if sheds_total > 0 {
        confirmed as f64 / sheds_total as f64
    } else {
        0.0
    };

    // with fewer passes than the window the pipeline can never confirm
    let analytic = if params.frame_gen.passes_per_shed < params.tagging.window {
        0.0
    } else {
        binomial_tail(
            params.tagging.window,
            params.tagging.threshold,
            params.detector.recall,
        )?
    };
    let std_error = (analytic * (1.0 - analytic) / sheds_total.max(1) as f64).sqrt();
    let tolerance = 4.0 * std_error;
    let delta = (empirical - analytic).abs();
    let within_tolerance = delta <= tolerance;

    let evaluation = build_report(
        &verdicts,
        &permits.permits,
        &dataset.frames,
        &grid,
        params.tagging.window,
        None,
    )?;
    let identities_ok = evaluation.check_identities().is_ok();

    let planted = params.n_unpermitted;
    let recovered = evaluation.unpermitted_clusters;
    let unpermitted_recovered_exactly =
        (params.detector.recall == 1.0).then_some(recovered == planted);

    let passed = within_tolerance
        && identities_ok
        && unpermitted_recovered_exactly.unwrap_or(recovered <= planted);

    Ok(EndToEndReport {
        sheds_total,
        sheds_confirmed: confirmed,
        empirical_fraction: empirical,
        analytic_recall: analytic,
        std_error,
        delta,
        tolerance,
        within_tolerance,
        planted_unpermitted: planted,
        recovered_unpermitted_clusters: recovered,
        unpermitted_recovered_exactly,
        identities_ok,
        evaluation,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplify::binomial_tail;
    use crate::tagging::build_histories;

    fn grid() -> GridConfig {
        GridConfig::default()
    }

    #[test]
    fn empty_world() {
        let world = gen_world(0, 0, PlaneRect::centered(2000.0), 1, &grid()).unwrap();
        assert!(world.sheds.is_empty());
        let csv = world_permit_csv(&world, &grid()).unwrap();
        assert_eq!(csv.lines().count(), 1); // header only
    }

    #[test]
    fn world_generation_is_deterministic() {
        let a = gen_world(10, 2, PlaneRect::centered(8000.0), 7, &grid()).unwrap();
        let b = gen_world(10, 2, PlaneRect::centered(8000.0), 7, &grid()).unwrap();
        assert_eq!(a.sheds.len(), 12);
        for (x, y) in a.sheds.iter().zip(b.sheds.iter()) {
            assert_eq!(x.location, y.location);
            assert_eq!(x.permit_id, y.permit_id);
        }
    }

    #[test]
    fn sheds_respect_minimum_separation() {
        let world = gen_world(15, 5, PlaneRect::centered(9000.0), 3, &grid()).unwrap();
        for (i, a) in world.sheds.iter().enumerate() {
            for b in world.sheds.iter().skip(i + 1) {
                let d = a.location.distance_ft(b.location);
                assert!(d > 640.0, "separation {d} ft");
            }
        }
    }

    #[test]
    fn bounds_too_small_is_an_error() {
        assert!(matches!(
            gen_world(100, 0, PlaneRect::centered(1000.0), 1, &grid()),
            Err(SimError::BoundsTooSmall { .. })
        ));
    }

    #[test]
    fn bounds_outside_projection_box_are_rejected_up_front() {
        assert!(matches!(
            gen_world(1, 0, PlaneRect::centered(500_000.0), 1, &grid()),
            Err(SimError::InvalidParam(_))
        ));
    }

    #[test]
    fn perfect_recall_gives_all_positive_histories() {
        let g = grid();
        let world = gen_world(5, 0, PlaneRect::centered(6000.0), 11, &g).unwrap();
        let detector = DetectorModel {
            recall: 1.0,
            ..Default::default()
        };
        let jsonl = gen_frames(&world, &FrameGenParams::default(), &detector, 11, &g).unwrap();
        let ds = parse_frames(
            jsonl.as_bytes(),
            FrameFormat::Jsonl,
            &FrameParseConfig::default(),
        )
        .unwrap();
        assert_eq!(ds.rejects.rejected, 0, "synthetic frames must round-trip");
        let histories = build_histories(&ds, &g).unwrap();
        for shed in &world.sheds {
            let cell = g.cell_of(shed.location);
            let h = &histories[&cell];
            assert_eq!(h.observations.len(), 20, "all passes land in the home cell");
            assert!(h.observations.iter().all(|o| o.detected));
        }
    }

    #[test]
    fn zero_recall_gives_zero_positives() {
        let g = grid();
        let world = gen_world(3, 0, PlaneRect::centered(5000.0), 2, &g).unwrap();
        let detector = DetectorModel {
            recall: 0.0,
            ..Default::default()
        };
        let jsonl = gen_frames(&world, &FrameGenParams::default(), &detector, 2, &g).unwrap();
        assert!(!jsonl.contains("\"detected\":true"));
    }

    #[test]
    fn positive_fraction_tracks_recall() {
        let g = grid();
        let world = gen_world(1, 0, PlaneRect::centered(3000.0), 5, &g).unwrap();
        let detector = DetectorModel::default(); // recall 0.5676
        let params = FrameGenParams {
            passes_per_shed: 10_000,
            ..Default::default()
        };
        let jsonl = gen_frames(&world, &params, &detector, 5, &g).unwrap();
        let positives = jsonl.matches("\"detected\":true").count();
        let fraction = positives as f64 / 10_000.0;
        let sigma = (0.5676f64 * (1.0 - 0.5676) / 10_000.0).sqrt();
        assert!(
            (fraction - 0.5676).abs() < 4.0 * sigma,
            "fraction {fraction} vs expected 0.5676 (4 sigma = {})",
            4.0 * sigma
        );
    }

    #[test]
    fn frames_are_deterministic_and_reject_free() {
        let g = grid();
        let world = gen_world(4, 1, PlaneRect::centered(6000.0), 9, &g).unwrap();
        let params = FrameGenParams {
            background_frames: 50,
            ..Default::default()
        };
        let detector = DetectorModel {
            false_positive_rate: 0.05,
            ..Default::default()
        };
        let a = gen_frames(&world, &params, &detector, 9, &g).unwrap();
        let b = gen_frames(&world, &params, &detector, 9, &g).unwrap();
        assert_eq!(a, b);
        let ds = parse_frames(
            a.as_bytes(),
            FrameFormat::Jsonl,
            &FrameParseConfig::default(),
        )
        .unwrap();
        assert_eq!(ds.rejects.rejected, 0);
        assert_eq!(ds.frames.len(), 4 * 20 + 20 + 50);
    }

    #[test]
    fn monte_carlo_degenerate_rates() {
        assert_eq!(monte_carlo_tail(1.0, 20, 6, 1000, 1).unwrap(), 1.0);
        assert_eq!(monte_carlo_tail(0.0, 20, 1, 1000, 1).unwrap(), 0.0);
        assert!(monte_carlo_tail(0.5, 20, 6, 0, 1).is_err());
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let a = monte_carlo_tail(0.37, 20, 6, 20_000, 99).unwrap();
        let b = monte_carlo_tail(0.37, 20, 6, 20_000, 99).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_tail(0.37, 20, 6, 20_000, 100).unwrap();
        assert_ne!(a, c); // overwhelmingly likely
    }

    #[test]
    fn monte_carlo_converges_toward_analytic() {
        let analytic = binomial_tail(20, 6, 0.5676).unwrap();
        let mut last_err = f64::INFINITY;
        let mut shrank = 0;
        for (i, draws) in [4_000usize, 40_000, 400_000].into_iter().enumerate() {
            let est = monte_carlo_tail(0.5676, 20, 6, draws, 7 + i as u64).unwrap();
            let err = (est - analytic).abs();
            let sigma = (analytic * (1.0 - analytic) / draws as f64).sqrt();
            assert!(
                err < 4.0 * sigma,
                "draws {draws}: err {err} vs 4 sigma {}",
                4.0 * sigma
            );
            if err < last_err {
                shrank += 1;
            }
            last_err = err;
        }
        assert!(shrank >= 1, "error should tend downward across draw sizes");
    }

    #[test]
    fn end_to_end_perfect_recall_confirms_everything() {
        let params = EndToEndParams {
            n_permitted: 80,
            n_unpermitted: 20,
            bounds: PlaneRect::centered(9000.0),
            detector: DetectorModel {
                recall: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let report = end_to_end_check(&params).unwrap();
        assert_eq!(report.sheds_confirmed, 100);
        assert_eq!(report.delta, 0.0);
        assert_eq!(report.unpermitted_recovered_exactly, Some(true));
        assert_eq!(report.evaluation.unpermitted_clusters, 20);
        assert_eq!(report.evaluation.out_of_scope_permits, 0);
        assert!(report.identities_ok && report.passed);
    }

    #[test]
    fn end_to_end_rejects_false_positives() {
        let params = EndToEndParams {
            detector: DetectorModel {
                false_positive_rate: 0.1,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(
            end_to_end_check(&params),
            Err(SimError::InvalidParam(_))
        ));
    }
}
