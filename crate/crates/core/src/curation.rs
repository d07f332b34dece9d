//! Training-set curation: pick frames that plausibly see a permitted
//! site (close enough, camera pointed the right way), then sample them so
//! the borough mix matches a target distribution, and measure the match
//! with KL divergence.

use crate::geo::{
    feet_to_meters, meters_to_feet, plane_bearing, GeoError, GridConfig, PlanePoint, COINCIDENT_FT,
};
use crate::ingest::{Borough, FrameRecord, PermitRecord};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("invalid curation configuration: {0}")]
    InvalidConfig(String),
    #[error("requested {requested} samples but only {available} candidates exist")]
    InsufficientCandidates { requested: usize, available: usize },
    #[error("distribution must have at least one positive weight")]
    EmptyDistribution,
    #[error("negative weight {weight} for {borough:?}")]
    NegativeWeight { borough: Borough, weight: f64 },
    #[error("divergence undefined: {borough:?} has positive weight in p but zero in q")]
    DivergenceUndefined { borough: Borough },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Distance and angle gates for the near-permit filter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub max_distance_m: f64,
    pub angle_tolerance_deg: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            max_distance_m: 100.0,
            angle_tolerance_deg: 45.0,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        if !self.max_distance_m.is_finite() || self.max_distance_m <= 0.0 {
            return Err(CurationError::InvalidConfig(format!(
                "max_distance_m must be positive, got {}",
                self.max_distance_m
            )));
        }
        if !(0.0..=180.0).contains(&self.angle_tolerance_deg) || self.angle_tolerance_deg == 0.0 {
            return Err(CurationError::InvalidConfig(format!(
                "angle_tolerance_deg must be in (0, 180], got {}",
                self.angle_tolerance_deg
            )));
        }
        Ok(())
    }
}

/// Nonnegative weights per borough; comparisons normalize to sum 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoroughDistribution {
    weights: BTreeMap<Borough, f64>,
}

impl BoroughDistribution {
    pub fn new(weights: BTreeMap<Borough, f64>) -> Result<BoroughDistribution, CurationError> {
        let mut any_positive = false;
        for (&borough, &weight) in &weights {
            if !weight.is_finite() || weight < 0.0 {
                return Err(CurationError::NegativeWeight { borough, weight });
            }
            if weight > 0.0 {
                any_positive = true;
            }
        }
        if !any_positive {
            return Err(CurationError::EmptyDistribution);
        }
        Ok(BoroughDistribution { weights })
    }

    pub fn from_counts(
        counts: &BTreeMap<Borough, usize>,
    ) -> Result<BoroughDistribution, CurationError> {
        BoroughDistribution::new(counts.iter().map(|(&b, &c)| (b, c as f64)).collect())
    }

    pub fn weights(&self) -> &BTreeMap<Borough, f64> {
        &self.weights
    }

    /// Weights scaled to sum exactly 1, in borough order.
    pub fn normalized(&self) -> BTreeMap<Borough, f64> {
        let total: f64 = self.weights.values().sum();
        self.weights.iter().map(|(&b, &w)| (b, w / total)).collect()
    }
}

/// One accepted (frame, permit) pairing from the near-permit filter.
#[derive(Debug, Clone)]
pub struct NearPermitMatch {
    pub frame: FrameRecord,
    pub permit: PermitRecord,
    pub distance_m: f64,
    pub bearing_gap_deg: f64,
}

/// Pair each frame with its nearest qualifying permit: planar distance
/// within `max_distance_m` and camera heading within
/// `angle_tolerance_deg` of the bearing toward the permit. Frames
/// coincident with a permit location are accepted with a zero gap (the
/// bearing is undefined there, but such a frame certainly sees the site).
pub fn near_permit_filter(
    frames: &[FrameRecord],
    permits: &[PermitRecord],
    cfg: &CurationConfig,
    grid: &GridConfig,
) -> Result<Vec<NearPermitMatch>, CurationError> {
    cfg.validate()?;
    let max_distance_ft = meters_to_feet(cfg.max_distance_m);

    // Bucket permits on a coarse grid of the gate distance so each frame
    // only scans its 3x3 neighborhood.
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut permit_points: Vec<PlanePoint> = Vec::with_capacity(permits.len());
    for (idx, permit) in permits.iter().enumerate() {
        let p = grid.project(permit.location)?;
        let key = bucket_key(p, max_distance_ft);
        buckets.entry(key).or_default().push(idx);
        permit_points.push(p);
    }

    let mut matches = Vec::new();
    for frame in frames {
        let fp = grid.project(frame.location)?;
        let (bx, by) = bucket_key(fp, max_distance_ft);
        // nearest qualifying permit: min by (distance, permit_id)
        let mut best: Option<(f64, &PermitRecord, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(indices) = buckets.get(&(bx + dx, by + dy)) else {
                    continue;
                };
                for &idx in indices {
                    let dist_ft = fp.distance_ft(permit_points[idx]);
                    if dist_ft > max_distance_ft {
                        continue;
                    }
                    let gap = if dist_ft < COINCIDENT_FT {
                        0.0
                    } else {
                        let bearing = plane_bearing(fp, permit_points[idx])?;
                        frame.heading.angular_diff(bearing)
                    };
                    if gap > cfg.angle_tolerance_deg {
                        continue;
                    }
                    let candidate = (dist_ft, &permits[idx], gap);
                    let better = match &best {
                        None => true,
                        Some((best_dist, best_permit, _)) => {
                            dist_ft < *best_dist
                                || (dist_ft == *best_dist
                                    && candidate.1.permit_id < best_permit.permit_id)
                        }
                    };
                    if better {
                        best = Some(candidate);
                    }
                }
            }
        }
        if let Some((dist_ft, permit, gap)) = best {
            matches.push(NearPermitMatch {
                frame: frame.clone(),
                permit: permit.clone(),
                distance_m: feet_to_meters(dist_ft),
                bearing_gap_deg: gap,
            });
        }
    }
    Ok(matches)
}

fn bucket_key(p: PlanePoint, size_ft: f64) -> (i64, i64) {
    (
        (p.x_ft / size_ft).floor() as i64,
        (p.y_ft / size_ft).floor() as i64,
    )
}

/// Outcome of a stratified draw.
#[derive(Debug, Clone)]
pub struct StratifiedSample {
    /// Selected frames, sorted by frame id.
    pub selected: Vec<FrameRecord>,
    /// The apportioned per-borough targets before capacity adjustment.
    pub quotas: BTreeMap<Borough, usize>,
    /// What was actually drawn per borough.
    pub selected_counts: BTreeMap<Borough, usize>,
    /// Quota shortfall per borough that had too few candidates.
    pub shortfalls: BTreeMap<Borough, usize>,
}

/// Largest-remainder apportionment of `total` across normalized weights.
/// Remainder ties break by borough order.
fn apportion(total: usize, weights: &BTreeMap<Borough, f64>) -> BTreeMap<Borough, usize> {
    let sum: f64 = weights.values().sum();
    let mut quotas: Vec<(Borough, usize, f64)> = weights
        .iter()
        .map(|(&b, &w)| {
            let exact = total as f64 * w / sum;
            (b, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|(_, q, _)| q).sum();
    let mut leftover = total - assigned;
    // stable sort keeps borough order among equal remainders
    quotas.sort_by(|a, b| b.2.total_cmp(&a.2));
    for q in quotas.iter_mut() {
        if leftover == 0 {
            break;
        }
        q.1 += 1;
        leftover -= 1;
    }
    quotas.into_iter().map(|(b, q, _)| (b, q)).collect()
}

/// Draw `total` frames from borough-labeled candidates so the borough mix
/// follows `target`. Deterministic for a given seed. Boroughs that cannot
/// fill their quota report a shortfall, which is redistributed
/// proportionally among the boroughs that still have spare candidates.
pub fn stratified_sample(
    candidates: &[(FrameRecord, Borough)],
    target: &BoroughDistribution,
    total: usize,
    seed: u64,
) -> Result<StratifiedSample, CurationError> {
    if total > candidates.len() {
        return Err(CurationError::InsufficientCandidates {
            requested: total,
            available: candidates.len(),
        });
    }

    let mut by_borough: BTreeMap<Borough, Vec<&FrameRecord>> = BTreeMap::new();
    for (frame, borough) in candidates {
        by_borough.entry(*borough).or_default().push(frame);
    }
    // canonical candidate order inside each borough
    for list in by_borough.values_mut() {
        list.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    }

    let initial = apportion(total, &target.normalized());
    let mut final_quota = initial.clone();
    let capacity: BTreeMap<Borough, usize> =
        by_borough.iter().map(|(&b, v)| (b, v.len())).collect();
    let cap_of = |b: Borough| capacity.get(&b).copied().unwrap_or(0);

    // Clamp over-quota boroughs to capacity and re-spread the deficit over
    // the others until everything fits (total <= overall capacity, so this
    // terminates).
    loop {
        let mut deficit = 0usize;
        let mut saturated: Vec<Borough> = Vec::new();
        for (&b, q) in final_quota.iter_mut() {
            let cap = cap_of(b);
            if *q > cap {
                deficit += *q - cap;
                *q = cap;
            }
            if *q >= cap {
                saturated.push(b);
            }
        }
        if deficit == 0 {
            break;
        }
        let spare_weights: BTreeMap<Borough, f64> = target
            .normalized()
            .into_iter()
            .filter(|(b, w)| !saturated.contains(b) && *w > 0.0)
            .collect();
        let extra = if spare_weights.is_empty() {
            // the target's support is exhausted: the draw must still sum
            // to `total`, so spread the rest over whatever boroughs have
            // candidates left, proportionally to their remaining capacity
            let fallback: BTreeMap<Borough, f64> = capacity
                .iter()
                .map(|(&b, &cap)| (b, cap - final_quota.get(&b).copied().unwrap_or(0)))
                .filter(|&(_, spare)| spare > 0)
                .map(|(b, spare)| (b, spare as f64))
                .collect();
            apportion(deficit, &fallback)
        } else {
            apportion(deficit, &spare_weights)
        };
        for (b, add) in extra {
            *final_quota.entry(b).or_insert(0) += add;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected: Vec<FrameRecord> = Vec::with_capacity(total);
    let mut selected_counts = BTreeMap::new();
    for (&borough, quota) in &final_quota {
        let pool = by_borough.get(&borough).map(Vec::as_slice).unwrap_or(&[]);
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        // partial Fisher-Yates: the first `quota` slots become the draw
        for i in 0..*quota {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        for &i in indices.iter().take(*quota) {
            selected.push(pool[i].clone());
        }
        selected_counts.insert(borough, *quota);
    }
    selected.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));

    let shortfalls: BTreeMap<Borough, usize> = initial
        .iter()
        .filter_map(|(&b, &want)| {
            let got = final_quota.get(&b).copied().unwrap_or(0);
            (want > got).then(|| (b, want - got))
        })
        .collect();

    Ok(StratifiedSample {
        selected,
        quotas: initial,
        selected_counts,
        shortfalls,
    })
}

/// KL divergence (nats) between two borough distributions, computed on
/// normalized weights. Terms with zero mass in `p` contribute nothing;
/// positive `p`-mass where `q` is zero makes the divergence undefined.
pub fn kl_divergence(
    p: &BoroughDistribution,
    q: &BoroughDistribution,
) -> Result<f64, CurationError> {
    let pn = p.normalized();
    let qn = q.normalized();
    let mut sum = 0.0;
    for (&borough, &pi) in &pn {
        if pi == 0.0 {
            continue;
        }
        let qi = qn.get(&borough).copied().unwrap_or(0.0);
        if qi == 0.0 {
            return Err(CurationError::DivergenceUndefined { borough });
        }
        sum += pi * (pi / qi).ln();
    }
    // Gibbs: the exact value is nonnegative; only rounding can dip below
    Ok(sum.max(0.0))
}
