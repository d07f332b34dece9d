//! Evaluation against the permit registry: which permits the tagging pass
//! confirmed, which were undetectable in principle (coverage ceiling),
//! which confirmed cells match no permit at all (estimated unpermitted
//! structures), and per-neighborhood impact factors.

use crate::boundary::{feature, feature_collection, AreaSet, BoroughMap};
use crate::geo::{GeoError, GridCell, GridConfig, PlanePoint};
use crate::ingest::{FrameRecord, PermitRecord};
use crate::tagging::CellVerdict;
use chrono::NaiveDate;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// The grouping square around one permit plus its raw frame coverage.
#[derive(Debug, Clone)]
pub struct PermitRegion {
    pub permit: PermitRecord,
    pub cells: BTreeSet<GridCell>,
    pub frames_within_radius: usize,
}

/// Permits split by whether the dataset could confirm them at all.
#[derive(Debug, Clone)]
pub struct CoveragePartition {
    pub in_scope: Vec<PermitRegion>,
    pub out_of_scope: Vec<PermitRegion>,
}

/// A permit is out of scope when fewer than `min_frames` frames were
/// captured within the visibility radius of its location (the camera
/// position, not the displaced observation point, is what counts).
pub fn coverage_ceiling(
    frames: &[FrameRecord],
    permits: &[PermitRecord],
    grid: &GridConfig,
    min_frames: usize,
) -> Result<CoveragePartition, EvaluateError> {
    let radius = grid.visibility_radius_ft;
    // bucket frames at the radius scale; per permit, scan 3x3 buckets
    let mut buckets: HashMap<(i64, i64), Vec<PlanePoint>> = HashMap::new();
    for frame in frames {
        let p = grid.project(frame.location)?;
        let key = (
            (p.x_ft / radius).floor() as i64,
            (p.y_ft / radius).floor() as i64,
        );
        buckets.entry(key).or_default().push(p);
    }
    let mut partition = CoveragePartition {
        in_scope: Vec::new(),
        out_of_scope: Vec::new(),
    };
    for permit in permits {
        let pp = grid.project(permit.location)?;
        let (bx, by) = (
            (pp.x_ft / radius).floor() as i64,
            (pp.y_ft / radius).floor() as i64,
        );
        let mut count = 0usize;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(points) = buckets.get(&(bx + dx, by + dy)) {
                    count += points
                        .iter()
                        .filter(|p| p.distance_ft(pp) <= radius)
                        .count();
                }
            }
        }
        let region = PermitRegion {
            permit: permit.clone(),
            cells: grid.cells_in_region(pp).into_iter().collect(),
            frames_within_radius: count,
        };
        if count >= min_frames {
            partition.in_scope.push(region);
        } else {
            partition.out_of_scope.push(region);
        }
    }
    Ok(partition)
}

/// Confirmed cells matched against permit regions.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    /// Permits with at least one confirmed cell in their region.
    pub confirmed_permit_ids: BTreeSet<String>,
    /// Confirmed cells lying in no permit's region.
    pub unmatched_cells: BTreeSet<GridCell>,
}

/// Match confirmed cells to permit regions. A cell inside two overlapping
/// regions confirms both permits; a cell is unmatched only when it lies
/// outside every region.
pub fn match_confirmations(
    verdicts: &[CellVerdict],
    permits: &[PermitRecord],
    grid: &GridConfig,
) -> Result<MatchOutcome, EvaluateError> {
    let confirmed: BTreeSet<GridCell> = verdicts
        .iter()
        .filter(|v| v.confirmed)
        .map(|v| v.cell)
        .collect();
    let mut confirmed_permit_ids = BTreeSet::new();
    let mut covered: BTreeSet<GridCell> = BTreeSet::new();
    for permit in permits {
        let center = grid.project(permit.location)?;
        let region = grid.cells_in_region(center);
        let mut hit = false;
        for cell in region {
            if confirmed.contains(&cell) {
                hit = true;
            }
            covered.insert(cell);
        }
        if hit {
            confirmed_permit_ids.insert(permit.permit_id.clone());
        }
    }
    let unmatched_cells = confirmed.difference(&covered).copied().collect();
    Ok(MatchOutcome {
        confirmed_permit_ids,
        unmatched_cells,
    })
}

/// One 8-connected component of unmatched confirmed cells: the unit used
/// to count estimated unpermitted structures.
#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub cells: Vec<GridCell>,
    /// Mean of the member cells' centers.
    pub centroid: PlanePoint,
}

/// Group unmatched cells into 8-connected components.
pub fn cluster_unpermitted(cells: &BTreeSet<GridCell>, grid: &GridConfig) -> Vec<Cluster> {
    let mut remaining: BTreeSet<GridCell> = cells.clone();
    let mut clusters = Vec::new();
    while let Some(&start) = remaining.iter().next() {
        remaining.remove(&start);
        let mut members = vec![start];
        let mut frontier = vec![start];
        while let Some(cell) = frontier.pop() {
            for dx in -1..=1i64 {
                for dy in -1..=1i64 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let neighbor = GridCell::new(cell.ix + dx, cell.iy + dy);
                    if remaining.remove(&neighbor) {
                        members.push(neighbor);
                        frontier.push(neighbor);
                    }
                }
            }
        }
        members.sort();
        let n = members.len() as f64;
        let centroid = PlanePoint::new(
            members
                .iter()
                .map(|c| grid.cell_center(*c).x_ft)
                .sum::<f64>()
                / n,
            members
                .iter()
                .map(|c| grid.cell_center(*c).y_ft)
                .sum::<f64>()
                / n,
        );
        clusters.push(Cluster {
            cells: members,
            centroid,
        });
    }
    clusters
}

/// The five headline counts, globally and per borough.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TallyCounts {
    pub tagged_total: usize,
    pub confirmed_permitted: usize,
    pub unpermitted_clusters: usize,
    pub out_of_scope_permits: usize,
    pub missed_permits: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub total_permits: usize,
    pub in_scope_permits: usize,
    pub tagged_total: usize,
    pub confirmed_permitted: usize,
    pub unpermitted_clusters: usize,
    pub out_of_scope_permits: usize,
    pub missed_permits: usize,
    /// In-scope permits confirmed, as a share of in-scope permits.
    pub confirmed_share_of_in_scope: f64,
    /// Out-of-scope permits that nevertheless matched a confirmed cell
    /// (possible when observations displace into an uncovered region).
    pub confirmed_out_of_scope: usize,
    /// Populated when a borough boundary file is supplied; permit counts
    /// use the permit's own borough, clusters the nearest borough polygon.
    pub per_borough: BTreeMap<String, TallyCounts>,
}

impl EvaluationReport {
    /// The structural identities every report must satisfy.
    pub fn check_identities(&self) -> Result<(), String> {
        if self.tagged_total != self.confirmed_permitted + self.unpermitted_clusters {
            return Err(format!(
                "tagged_total {} != confirmed_permitted {} + unpermitted_clusters {}",
                self.tagged_total, self.confirmed_permitted, self.unpermitted_clusters
            ));
        }
        if self.in_scope_permits != self.total_permits - self.out_of_scope_permits {
            return Err(format!(
                "in_scope {} != total {} - out_of_scope {}",
                self.in_scope_permits, self.total_permits, self.out_of_scope_permits
            ));
        }
        if self.missed_permits != self.in_scope_permits - self.confirmed_permitted {
            return Err(format!(
                "missed {} != in_scope {} - confirmed {}",
                self.missed_permits, self.in_scope_permits, self.confirmed_permitted
            ));
        }
        Ok(())
    }
}

/// Run the evaluation stage end to end over tagging verdicts.
pub fn build_report(
    verdicts: &[CellVerdict],
    permits: &[PermitRecord],
    frames: &[FrameRecord],
    grid: &GridConfig,
    min_frames: usize,
    boroughs: Option<&BoroughMap>,
) -> Result<EvaluationReport, EvaluateError> {
    let partition = coverage_ceiling(frames, permits, grid, min_frames)?;
    let outcome = match_confirmations(verdicts, permits, grid)?;
    let clusters = cluster_unpermitted(&outcome.unmatched_cells, grid);

    let in_scope_ids: BTreeSet<&str> = partition
        .in_scope
        .iter()
        .map(|r| r.permit.permit_id.as_str())
        .collect();
    let confirmed_in_scope: BTreeSet<&str> = outcome
        .confirmed_permit_ids
        .iter()
        .map(String::as_str)
        .filter(|id| in_scope_ids.contains(id))
        .collect();
    let confirmed_out_of_scope = outcome.confirmed_permit_ids.len() - confirmed_in_scope.len();

    let mut per_borough: BTreeMap<String, TallyCounts> = BTreeMap::new();
    for region in &partition.in_scope {
        let t = per_borough
            .entry(region.permit.borough.name().to_string())
            .or_default();
        if confirmed_in_scope.contains(region.permit.permit_id.as_str()) {
            t.confirmed_permitted += 1;
            t.tagged_total += 1;
        } else {
            t.missed_permits += 1;
        }
    }
    for region in &partition.out_of_scope {
        per_borough
            .entry(region.permit.borough.name().to_string())
            .or_default()
            .out_of_scope_permits += 1;
    }
    if let Some(map) = boroughs {
        for cluster in &clusters {
            if let Ok(point) = grid.unproject(cluster.centroid) {
                if let Some(b) = map.nearest(point) {
                    let t = per_borough.entry(b.name().to_string()).or_default();
                    t.unpermitted_clusters += 1;
                    t.tagged_total += 1;
                }
            }
        }
    }

    let confirmed_permitted = confirmed_in_scope.len();
    let in_scope_permits = partition.in_scope.len();
    let report = EvaluationReport {
        total_permits: permits.len(),
        in_scope_permits,
        tagged_total: confirmed_permitted + clusters.len(),
        confirmed_permitted,
        unpermitted_clusters: clusters.len(),
        out_of_scope_permits: partition.out_of_scope.len(),
        missed_permits: in_scope_permits - confirmed_permitted,
        confirmed_share_of_in_scope: if in_scope_permits > 0 {
            confirmed_permitted as f64 / in_scope_permits as f64
        } else {
            0.0
        },
        confirmed_out_of_scope,
        per_borough,
    };
    debug_assert!(report.check_identities().is_ok());
    Ok(report)
}

/// Unpermitted clusters as a GeoJSON FeatureCollection (one point feature
/// per cluster centroid, with the member cell count).
pub fn clusters_to_geojson(
    clusters: &[Cluster],
    grid: &GridConfig,
) -> Result<serde_json::Value, EvaluateError> {
    let mut features = Vec::with_capacity(clusters.len());
    for (i, cluster) in clusters.iter().enumerate() {
        let centroid = grid.unproject(cluster.centroid)?;
        let geometry = serde_json::json!({
            "type": "Point",
            "coordinates": [centroid.lon, centroid.lat],
        });
        let mut props = serde_json::Map::new();
        props.insert("cluster_id".into(), i.into());
        props.insert("cell_count".into(), cluster.cells.len().into());
        features.push(feature(geometry, props));
    }
    Ok(feature_collection(features))
}

/// Summed permit age in days for one area.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImpactFactor {
    pub area_id: String,
    pub summed_age_days: u64,
    pub permit_count: usize,
}

/// Reserved bucket for permits falling outside every area polygon.
pub const UNASSIGNED_AREA: &str = "_unassigned";

/// Sum the ages (days since issue, floored at zero) of active permits per
/// containing area. Every area id appears in the output, zero or not.
pub fn impact_factor(
    permits: &[PermitRecord],
    areas: &AreaSet,
    as_of: NaiveDate,
) -> Vec<ImpactFactor> {
    let mut sums: BTreeMap<String, (u64, usize)> = areas
        .ids()
        .map(|id| (id.to_string(), (0u64, 0usize)))
        .collect();
    let mut unassigned: Option<(u64, usize)> = None;
    for permit in permits {
        if permit.expires_on < as_of {
            continue; // not active
        }
        let age_days = (as_of - permit.issued_on).num_days().max(0) as u64;
        match areas.assign(permit.location) {
            Some(id) => {
                let entry = sums.get_mut(id).expect("assign returns known ids");
                entry.0 += age_days;
                entry.1 += 1;
            }
            None => {
                let entry = unassigned.get_or_insert((0, 0));
                entry.0 += age_days;
                entry.1 += 1;
            }
        }
    }
    let mut out: Vec<ImpactFactor> = sums
        .into_iter()
        .map(|(area_id, (summed_age_days, permit_count))| ImpactFactor {
            area_id,
            summed_age_days,
            permit_count,
        })
        .collect();
    if let Some((age, count)) = unassigned {
        out.push(ImpactFactor {
            area_id: UNASSIGNED_AREA.to_string(),
            summed_age_days: age,
            permit_count: count,
        });
    }
    out
}

/// Per-borough tallies as CSV.
pub fn per_borough_csv(report: &EvaluationReport) -> String {
    let mut out = String::from(
        "borough,tagged_total,confirmed_permitted,unpermitted_clusters,out_of_scope_permits,missed_permits\n",
    );
    for (borough, t) in &report.per_borough {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            borough,
            t.tagged_total,
            t.confirmed_permitted,
            t.unpermitted_clusters,
            t.out_of_scope_permits,
            t.missed_permits
        ));
    }
    out
}
