//! Polygon boundary files: parsing GeoJSON FeatureCollections and
//! assigning points to named areas.
//!
//! Used for two inputs: the five-borough boundary file (labels frames and
//! clusters with a borough) and neighborhood polygons for impact-factor
//! aggregation. Containment uses even-odd ray casting; points exactly on a
//! boundary count as contained, and a point contained by several areas is
//! assigned the lexicographically smallest id so assignment is
//! deterministic.

use crate::geo::GeoPoint;
use crate::ingest::Borough;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("invalid GeoJSON: {0}")]
    InvalidGeoJson(String),
    #[error("feature {index} is missing string property {property:?}")]
    MissingProperty { index: usize, property: String },
    #[error("feature {index} has unsupported geometry type {geom_type:?} (want Polygon or MultiPolygon)")]
    UnsupportedGeometry { index: usize, geom_type: String },
    #[error("area {id:?} does not name a borough")]
    UnknownBorough { id: String },
}

/// One ring: `[lon, lat]` vertices, closed or open (the closing vertex is
/// optional on input).
type Ring = Vec<[f64; 2]>;

#[derive(Debug, Clone)]
struct PolygonRings {
    exterior: Ring,
    holes: Vec<Ring>,
    /// `[min_lon, min_lat, max_lon, max_lat]` of the exterior, for cheap
    /// rejection before the ray cast.
    bbox: [f64; 4],
}

/// A named area: one or more polygons (MultiPolygon features are split
/// into their parts).
#[derive(Debug, Clone)]
pub struct Area {
    pub id: String,
    polygons: Vec<PolygonRings>,
}

impl Area {
    /// Re-emit this area's geometry as a GeoJSON value (Polygon when it
    /// has a single part, MultiPolygon otherwise).
    pub fn geometry_json(&self) -> Value {
        let poly_coords = |p: &PolygonRings| -> Value {
            let rings: Vec<Value> = std::iter::once(&p.exterior)
                .chain(p.holes.iter())
                .map(|ring| {
                    Value::Array(
                        ring.iter()
                            .map(|v| serde_json::json!([v[0], v[1]]))
                            .collect(),
                    )
                })
                .collect();
            Value::Array(rings)
        };
        if self.polygons.len() == 1 {
            serde_json::json!({ "type": "Polygon", "coordinates": poly_coords(&self.polygons[0]) })
        } else {
            let parts: Vec<Value> = self.polygons.iter().map(poly_coords).collect();
            serde_json::json!({ "type": "MultiPolygon", "coordinates": parts })
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        let pt = [p.lon, p.lat];
        self.polygons.iter().any(|poly| {
            let [min_lon, min_lat, max_lon, max_lat] = poly.bbox;
            if pt[0] < min_lon || pt[0] > max_lon || pt[1] < min_lat || pt[1] > max_lat {
                return false;
            }
            match ring_position(pt, &poly.exterior) {
                RingPosition::Outside => false,
                RingPosition::Boundary => true,
                RingPosition::Inside => !poly
                    .holes
                    .iter()
                    .any(|h| ring_position(pt, h) == RingPosition::Inside),
            }
        })
    }

    /// Squared distance from the point to the nearest ring segment, in
    /// locally-scaled degrees. Zero when contained. Only meaningful for
    /// ranking nearby areas.
    fn distance2(&self, p: GeoPoint) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let scale = p.lat.to_radians().cos();
        let pt = [p.lon * scale, p.lat];
        let mut best = f64::INFINITY;
        for poly in &self.polygons {
            for ring in std::iter::once(&poly.exterior).chain(poly.holes.iter()) {
                for w in ring.windows(2) {
                    let a = [w[0][0] * scale, w[0][1]];
                    let b = [w[1][0] * scale, w[1][1]];
                    best = best.min(point_segment_dist2(pt, a, b));
                }
            }
        }
        best
    }
}

/// A set of named areas loaded from one boundary file, sorted by id.
#[derive(Debug, Clone)]
pub struct AreaSet {
    areas: Vec<Area>,
}

impl AreaSet {
    /// Parse a GeoJSON FeatureCollection, taking each feature's area id
    /// from `id_property`.
    pub fn parse(geojson: &str, id_property: &str) -> Result<AreaSet, BoundaryError> {
        let root: Value = serde_json::from_str(geojson)
            .map_err(|e| BoundaryError::InvalidGeoJson(e.to_string()))?;
        let features = root
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| BoundaryError::InvalidGeoJson("no features array".into()))?;

        let mut areas: Vec<Area> = Vec::with_capacity(features.len());
        for (index, feature) in features.iter().enumerate() {
            let id = feature
                .get("properties")
                .and_then(|p| p.get(id_property))
                .and_then(property_as_string)
                .ok_or_else(|| BoundaryError::MissingProperty {
                    index,
                    property: id_property.to_string(),
                })?;
            let geometry = feature.get("geometry").ok_or_else(|| {
                BoundaryError::InvalidGeoJson(format!("feature {index} has no geometry"))
            })?;
            let geom_type = geometry
                .get("type")
                .and_then(Value::as_str)
                .unwrap_or("")
                .to_string();
            let coords = geometry.get("coordinates").ok_or_else(|| {
                BoundaryError::InvalidGeoJson(format!("feature {index} has no coordinates"))
            })?;
            let polygons = match geom_type.as_str() {
                "Polygon" => vec![parse_polygon(coords, index)?],
                "MultiPolygon" => coords
                    .as_array()
                    .ok_or_else(|| bad_coords(index))?
                    .iter()
                    .map(|poly| parse_polygon(poly, index))
                    .collect::<Result<Vec<_>, _>>()?,
                _ => return Err(BoundaryError::UnsupportedGeometry { index, geom_type }),
            };
            // Same id across several features: merge their polygons.
            if let Some(existing) = areas.iter_mut().find(|a| a.id == id) {
                existing.polygons.extend(polygons);
            } else {
                areas.push(Area { id, polygons });
            }
        }
        areas.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(AreaSet { areas })
    }

    pub fn areas(&self) -> &[Area] {
        &self.areas
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.areas.iter().map(|a| a.id.as_str())
    }

    /// Id of the area containing the point; boundary points go to the
    /// lexicographically smallest containing id. `None` when no area
    /// contains the point.
    pub fn assign(&self, p: GeoPoint) -> Option<&str> {
        // areas are sorted by id, so the first hit is the smallest id
        self.areas
            .iter()
            .find(|a| a.contains(p))
            .map(|a| a.id.as_str())
    }

    /// Containing area if any, otherwise the area with the nearest
    /// boundary (ties to the smaller id).
    pub fn nearest(&self, p: GeoPoint) -> Option<&str> {
        if let Some(id) = self.assign(p) {
            return Some(id);
        }
        self.areas
            .iter()
            .map(|a| (a.distance2(p), a.id.as_str()))
            .min_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(y.1)))
            .map(|(_, id)| id)
    }
}

/// Borough boundary file: an [`AreaSet`] whose ids parse as borough names.
#[derive(Debug, Clone)]
pub struct BoroughMap {
    set: AreaSet,
    boroughs: Vec<Borough>,
}

impl BoroughMap {
    /// Parse a FeatureCollection with a `borough` property per feature.
    pub fn parse(geojson: &str) -> Result<BoroughMap, BoundaryError> {
        Self::parse_with_property(geojson, "borough")
    }

    pub fn parse_with_property(geojson: &str, property: &str) -> Result<BoroughMap, BoundaryError> {
        let set = AreaSet::parse(geojson, property)?;
        let boroughs = set
            .areas
            .iter()
            .map(|a| {
                Borough::parse(&a.id)
                    .ok_or_else(|| BoundaryError::UnknownBorough { id: a.id.clone() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoroughMap { set, boroughs })
    }

    pub fn label(&self, p: GeoPoint) -> Option<Borough> {
        let id = self.set.assign(p)?;
        let idx = self.set.areas.iter().position(|a| a.id == id)?;
        Some(self.boroughs[idx])
    }

    pub fn nearest(&self, p: GeoPoint) -> Option<Borough> {
        let id = self.set.nearest(p)?;
        let idx = self.set.areas.iter().position(|a| a.id == id)?;
        Some(self.boroughs[idx])
    }
}

fn property_as_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn bad_coords(index: usize) -> BoundaryError {
    BoundaryError::InvalidGeoJson(format!("feature {index}: malformed coordinates"))
}

fn parse_polygon(coords: &Value, index: usize) -> Result<PolygonRings, BoundaryError> {
    let rings = coords.as_array().ok_or_else(|| bad_coords(index))?;
    if rings.is_empty() {
        return Err(bad_coords(index));
    }
    let mut parsed: Vec<Ring> = Vec::with_capacity(rings.len());
    for ring in rings {
        let verts = ring.as_array().ok_or_else(|| bad_coords(index))?;
        let mut out: Ring = Vec::with_capacity(verts.len() + 1);
        for v in verts {
            let pair = v.as_array().ok_or_else(|| bad_coords(index))?;
            if pair.len() < 2 {
                return Err(bad_coords(index));
            }
            let lon = pair[0].as_f64().ok_or_else(|| bad_coords(index))?;
            let lat = pair[1].as_f64().ok_or_else(|| bad_coords(index))?;
            out.push([lon, lat]);
        }
        if out.len() < 3 {
            return Err(bad_coords(index));
        }
        // close the ring if the input left it open
        if out.first() != out.last() {
            let first = out[0];
            out.push(first);
        }
        parsed.push(out);
    }
    let exterior = parsed.remove(0);
    let mut bbox = [
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    for v in &exterior {
        bbox[0] = bbox[0].min(v[0]);
        bbox[1] = bbox[1].min(v[1]);
        bbox[2] = bbox[2].max(v[0]);
        bbox[3] = bbox[3].max(v[1]);
    }
    Ok(PolygonRings {
        exterior,
        holes: parsed,
        bbox,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RingPosition {
    Inside,
    Outside,
    Boundary,
}

/// Even-odd ray cast with an explicit on-segment test so boundary points
/// are classified consistently.
fn ring_position(pt: [f64; 2], ring: &[[f64; 2]]) -> RingPosition {
    let (px, py) = (pt[0], pt[1]);
    let mut inside = false;
    for w in ring.windows(2) {
        let (ax, ay) = (w[0][0], w[0][1]);
        let (bx, by) = (w[1][0], w[1][1]);
        if on_segment(pt, w[0], w[1]) {
            return RingPosition::Boundary;
        }
        if (ay > py) != (by > py) {
            let x_cross = ax + (py - ay) / (by - ay) * (bx - ax);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    if inside {
        RingPosition::Inside
    } else {
        RingPosition::Outside
    }
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    const EPS: f64 = 1e-12;
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if cross.abs() > EPS {
        return false;
    }
    let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
    let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
    dot >= -EPS && dot <= len2 + EPS
}

fn point_segment_dist2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / len2).clamp(0.0, 1.0)
    };
    let cx = a[0] + t * (b[0] - a[0]);
    let cy = a[1] + t * (b[1] - a[1]);
    (p[0] - cx).powi(2) + (p[1] - cy).powi(2)
}

/// Build a GeoJSON Feature value from a geometry and properties.
pub fn feature(geometry: Value, properties: serde_json::Map<String, Value>) -> Value {
    serde_json::json!({
        "type": "Feature",
        "geometry": geometry,
        "properties": properties,
    })
}

/// Wrap features into a FeatureCollection value.
pub fn feature_collection(features: Vec<Value>) -> Value {
    serde_json::json!({
        "type": "FeatureCollection",
        "features": features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> String {
        format!(
            r#"{{"type":"Feature","properties":{{"area":"{id}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]}}}}"#
        )
    }

    fn collection(features: &[String]) -> String {
        format!(
            r#"{{"type":"FeatureCollection","features":[{}]}}"#,
            features.join(",")
        )
    }

    #[test]
    fn assigns_containing_area() {
        let fc = collection(&[
            square("a", 0.0, 0.0, 1.0, 1.0),
            square("b", 1.0, 0.0, 2.0, 1.0),
        ]);
        let set = AreaSet::parse(&fc, "area").unwrap();
        assert_eq!(set.assign(GeoPoint::new(0.5, 0.5).unwrap()), Some("a"));
        assert_eq!(set.assign(GeoPoint::new(0.5, 1.5).unwrap()), Some("b"));
        assert_eq!(set.assign(GeoPoint::new(0.5, 3.0).unwrap()), None);
    }

    #[test]
    fn boundary_point_goes_to_smallest_id() {
        // shared edge at lon = 1
        let fc = collection(&[
            square("b", 0.0, 0.0, 1.0, 1.0),
            square("a", 1.0, 0.0, 2.0, 1.0),
        ]);
        let set = AreaSet::parse(&fc, "area").unwrap();
        assert_eq!(set.assign(GeoPoint::new(0.5, 1.0).unwrap()), Some("a"));
    }

    #[test]
    fn hole_excludes_interior() {
        let fc = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"area":"donut"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[4,0],[4,4],[0,4],[0,0]],[[1,1],[3,1],[3,3],[1,3],[1,1]]]}}]}"#;
        let set = AreaSet::parse(fc, "area").unwrap();
        assert_eq!(set.assign(GeoPoint::new(0.5, 0.5).unwrap()), Some("donut"));
        assert_eq!(set.assign(GeoPoint::new(2.0, 2.0).unwrap()), None);
        // hole edge is still polygon boundary
        assert_eq!(set.assign(GeoPoint::new(1.0, 2.0).unwrap()), Some("donut"));
    }

    #[test]
    fn nearest_falls_back_to_closest_edge() {
        let fc = collection(&[
            square("far", 10.0, 10.0, 11.0, 11.0),
            square("near", 0.0, 0.0, 1.0, 1.0),
        ]);
        let set = AreaSet::parse(&fc, "area").unwrap();
        assert_eq!(set.nearest(GeoPoint::new(1.5, 0.5).unwrap()), Some("near"));
    }

    #[test]
    fn missing_property_is_an_error() {
        let fc = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}]}"#;
        assert!(matches!(
            AreaSet::parse(fc, "area"),
            Err(BoundaryError::MissingProperty { .. })
        ));
    }
}
