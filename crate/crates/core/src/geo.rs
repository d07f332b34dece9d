//! Planar projection, bearings, heading displacement, and grid indexing.
//!
//! All spatial reasoning happens on a local tangent plane measured in feet:
//! geographic coordinates are projected once through an equirectangular
//! projection centered on a configurable origin, and every downstream
//! operation (distance gates, displacement, cell bucketing) works on
//! `PlanePoint`s. The projection is exactly invertible; its east-west
//! scale is pinned at the origin parallel, so short-range distance error
//! stays under 0.2% near that latitude and under 0.45% at the edges of
//! the default city bounding box.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// IUGG mean Earth radius, meters. Fixed so results are identical across
/// implementations.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// International foot: 1 m = 3.280839895 ft.
pub const FEET_PER_METER: f64 = 3.280839895;

/// Sanity limit on planar coordinates (covers NYC plus a wide margin).
pub const PLANE_LIMIT_FT: f64 = 1_000_000.0;

/// Below this planar separation two points are treated as coincident and
/// a bearing between them is undefined.
pub const COINCIDENT_FT: f64 = 0.01;

pub fn meters_to_feet(m: f64) -> f64 {
    m * FEET_PER_METER
}

pub fn feet_to_meters(ft: f64) -> f64 {
    ft / FEET_PER_METER
}

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("coordinate out of bounds: lat={lat}, lon={lon} (allowed {bounds})")]
    OutOfBounds {
        lat: f64,
        lon: f64,
        bounds: GeoBounds,
    },
    #[error("non-finite coordinate: {what}")]
    NonFinite { what: &'static str },
    #[error("planar coordinate exceeds {PLANE_LIMIT_FT} ft: ({x}, {y})")]
    PlaneLimit { x: f64, y: f64 },
    #[error("bearing undefined between coincident points (separation < {COINCIDENT_FT} ft)")]
    DegenerateBearing,
    #[error("displacement distance must be nonnegative, got {0}")]
    NegativeDistance(f64),
    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),
}

/// Geographic bounding box; everything projected must fall inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl GeoBounds {
    /// New York City plus a small margin.
    pub fn nyc() -> Self {
        GeoBounds {
            min_lat: 40.45,
            max_lat: 40.95,
            min_lon: -74.30,
            max_lon: -73.65,
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min_lat
            && p.lat <= self.max_lat
            && p.lon >= self.min_lon
            && p.lon <= self.max_lon
    }
}

impl Default for GeoBounds {
    fn default() -> Self {
        GeoBounds::nyc()
    }
}

impl std::fmt::Display for GeoBounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "lat {}..{}, lon {}..{}",
            self.min_lat, self.max_lat, self.min_lon, self.max_lon
        )
    }
}

/// A WGS-84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Validating constructor: both components must be finite and within
    /// [-90, 90] / [-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<GeoPoint, GeoError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GeoError::NonFinite { what: "lat/lon" });
        }
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::OutOfBounds {
                lat,
                lon,
                bounds: GeoBounds {
                    min_lat: -90.0,
                    max_lat: 90.0,
                    min_lon: -180.0,
                    max_lon: 180.0,
                },
            });
        }
        Ok(GeoPoint { lat, lon })
    }
}

/// A point on the local tangent plane: feet east (`x_ft`) and north
/// (`y_ft`) of the projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x_ft: f64,
    pub y_ft: f64,
}

impl PlanePoint {
    pub fn new(x_ft: f64, y_ft: f64) -> PlanePoint {
        PlanePoint { x_ft, y_ft }
    }

    pub fn distance_ft(self, other: PlanePoint) -> f64 {
        (self.x_ft - other.x_ft).hypot(self.y_ft - other.y_ft)
    }
}

/// Compass heading in degrees clockwise from true north, normalized to
/// [0, 360).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Heading(f64);

impl Heading {
    pub fn new(degrees: f64) -> Result<Heading, GeoError> {
        if !degrees.is_finite() {
            return Err(GeoError::NonFinite { what: "heading" });
        }
        let mut d = degrees.rem_euclid(360.0);
        // rem_euclid can return exactly 360.0 for tiny negative inputs
        if d >= 360.0 {
            d = 0.0;
        }
        Ok(Heading(d))
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    /// Smallest absolute difference between two headings on the circle,
    /// in [0, 180].
    pub fn angular_diff(self, other: Heading) -> f64 {
        let raw = (self.0 - other.0).abs();
        raw.min(360.0 - raw)
    }
}

/// Index of one grid cell. Cell `(ix, iy)` covers the half-open planar
/// square `[ix*s, (ix+1)*s) x [iy*s, (iy+1)*s)` for cell size `s`, so
/// every planar point belongs to exactly one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub ix: i64,
    pub iy: i64,
}

impl GridCell {
    pub fn new(ix: i64, iy: i64) -> GridCell {
        GridCell { ix, iy }
    }
}

/// Projection origin, bounding box, and the grid geometry shared by the
/// whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Projection center; defaults to NYC City Hall.
    pub origin: GeoPoint,
    pub bounds: GeoBounds,
    pub cell_size_ft: f64,
    /// How far an observation is pushed along the camera heading before
    /// bucketing, accounting for the gap between camera and subject.
    pub displacement_ft: f64,
    /// Side of the square region grouped around each permit.
    pub region_size_ft: f64,
    /// Maximum camera-to-subject distance at which a structure is
    /// considered visible.
    pub visibility_radius_ft: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            origin: GeoPoint {
                lat: 40.7128,
                lon: -74.0060,
            },
            bounds: GeoBounds::nyc(),
            cell_size_ft: 80.0,
            displacement_ft: 60.0,
            region_size_ft: 320.0,
            visibility_radius_ft: 120.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), GeoError> {
        for (name, v) in [
            ("cell_size_ft", self.cell_size_ft),
            ("displacement_ft", self.displacement_ft),
            ("region_size_ft", self.region_size_ft),
            ("visibility_radius_ft", self.visibility_radius_ft),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(GeoError::InvalidConfig(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        let ratio = self.region_size_ft / self.cell_size_ft;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(GeoError::InvalidConfig(format!(
                "region_size_ft ({}) must be an integer multiple of cell_size_ft ({})",
                self.region_size_ft, self.cell_size_ft
            )));
        }
        if !self.bounds.contains(self.origin) {
            return Err(GeoError::InvalidConfig(format!(
                "origin ({}, {}) outside bounds ({})",
                self.origin.lat, self.origin.lon, self.bounds
            )));
        }
        Ok(())
    }

    /// Equirectangular tangent-plane projection centered on `origin`,
    /// in feet. Exactly invertible by [`GridConfig::unproject`].
    pub fn project(&self, p: GeoPoint) -> Result<PlanePoint, GeoError> {
        if !self.bounds.contains(p) {
            return Err(GeoError::OutOfBounds {
                lat: p.lat,
                lon: p.lon,
                bounds: self.bounds,
            });
        }
        let dlat = (p.lat - self.origin.lat).to_radians();
        let dlon = (p.lon - self.origin.lon).to_radians();
        let x = EARTH_RADIUS_M * self.origin.lat.to_radians().cos() * dlon * FEET_PER_METER;
        let y = EARTH_RADIUS_M * dlat * FEET_PER_METER;
        if x.abs() >= PLANE_LIMIT_FT || y.abs() >= PLANE_LIMIT_FT {
            return Err(GeoError::PlaneLimit { x, y });
        }
        Ok(PlanePoint { x_ft: x, y_ft: y })
    }

    /// Algebraic inverse of [`GridConfig::project`].
    pub fn unproject(&self, p: PlanePoint) -> Result<GeoPoint, GeoError> {
        if !p.x_ft.is_finite() || !p.y_ft.is_finite() {
            return Err(GeoError::NonFinite {
                what: "plane point",
            });
        }
        let lat = self.origin.lat + (p.y_ft / (EARTH_RADIUS_M * FEET_PER_METER)).to_degrees();
        let lon = self.origin.lon
            + (p.x_ft / (EARTH_RADIUS_M * self.origin.lat.to_radians().cos() * FEET_PER_METER))
                .to_degrees();
        GeoPoint::new(lat, lon)
    }

    /// Compass bearing from one geographic point toward another, computed
    /// in the planar frame.
    pub fn bearing_to(&self, from: GeoPoint, to: GeoPoint) -> Result<Heading, GeoError> {
        plane_bearing(self.project(from)?, self.project(to)?)
    }

    /// The unique cell containing a planar point (floor semantics on the
    /// half-open cell squares).
    pub fn cell_of(&self, p: PlanePoint) -> GridCell {
        GridCell {
            ix: (p.x_ft / self.cell_size_ft).floor() as i64,
            iy: (p.y_ft / self.cell_size_ft).floor() as i64,
        }
    }

    /// Planar center of a cell.
    pub fn cell_center(&self, c: GridCell) -> PlanePoint {
        PlanePoint {
            x_ft: (c.ix as f64 + 0.5) * self.cell_size_ft,
            y_ft: (c.iy as f64 + 0.5) * self.cell_size_ft,
        }
    }

    /// Geographic corners of a cell as a closed GeoJSON-style ring
    /// (counterclockwise, first point repeated last), `(lon, lat)` order.
    pub fn cell_ring(&self, c: GridCell) -> Result<Vec<[f64; 2]>, GeoError> {
        let s = self.cell_size_ft;
        let (x0, y0) = (c.ix as f64 * s, c.iy as f64 * s);
        let corners = [
            PlanePoint::new(x0, y0),
            PlanePoint::new(x0 + s, y0),
            PlanePoint::new(x0 + s, y0 + s),
            PlanePoint::new(x0, y0 + s),
            PlanePoint::new(x0, y0),
        ];
        corners
            .iter()
            .map(|&p| self.unproject(p).map(|g| [g.lon, g.lat]))
            .collect()
    }

    /// All cells that overlap the closed square of side `region_size_ft`
    /// centered at `center` on a set of positive area. With the default
    /// 80-ft cells and 320-ft region this yields a 4x4 block when the
    /// center sits on a cell corner and a 5x5 block otherwise.
    pub fn cells_in_region(&self, center: PlanePoint) -> Vec<GridCell> {
        let half = self.region_size_ft / 2.0;
        let (ix_lo, ix_hi) = axis_cells(center.x_ft - half, center.x_ft + half, self.cell_size_ft);
        let (iy_lo, iy_hi) = axis_cells(center.y_ft - half, center.y_ft + half, self.cell_size_ft);
        let mut cells = Vec::with_capacity(((ix_hi - ix_lo + 1) * (iy_hi - iy_lo + 1)) as usize);
        for iy in iy_lo..=iy_hi {
            for ix in ix_lo..=ix_hi {
                cells.push(GridCell { ix, iy });
            }
        }
        cells
    }
}

/// Cell index range `[lo, hi]` whose half-open spans overlap `[a, b]` with
/// positive length. A cell touching the interval only at its edge does not
/// count.
fn axis_cells(a: f64, b: f64, s: f64) -> (i64, i64) {
    let lo = (a / s).floor() as i64;
    let div = b / s;
    let f = div.floor();
    let hi = if div == f { f as i64 - 1 } else { f as i64 };
    (lo, hi.max(lo))
}

/// Compass bearing between two planar points, `atan2(dx, dy)` mapped to
/// degrees clockwise from north.
pub fn plane_bearing(from: PlanePoint, to: PlanePoint) -> Result<Heading, GeoError> {
    if from.distance_ft(to) < COINCIDENT_FT {
        return Err(GeoError::DegenerateBearing);
    }
    let dx = to.x_ft - from.x_ft;
    let dy = to.y_ft - from.y_ft;
    Heading::new(dx.atan2(dy).to_degrees())
}

/// Move a planar point `d_ft` feet along a compass heading.
pub fn displace_along_heading(
    p: PlanePoint,
    h: Heading,
    d_ft: f64,
) -> Result<PlanePoint, GeoError> {
    if !d_ft.is_finite() || d_ft < 0.0 {
        return Err(GeoError::NegativeDistance(d_ft));
    }
    let rad = h.degrees().to_radians();
    Ok(PlanePoint {
        x_ft: p.x_ft + d_ft * rad.sin(),
        y_ft: p.y_ft + d_ft * rad.cos(),
    })
}
