//! Coordinates, metre/degree conversion and bounding boxes.
//!
//! Every city uses a single equirectangular scale evaluated at its centre
//! latitude: one degree of latitude is [`METERS_PER_DEGREE`] metres and one
//! degree of longitude is that value times `cos(lat)`. Keeping the scale fixed
//! per city makes the local lattice affine, so two cell boxes built from
//! neighbouring lattice offsets share a bit-identical boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Metres per degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// Latitudes at or beyond this magnitude are rejected by the metre/degree
/// conversion; `cos(lat)` is too close to zero there.
pub const POLAR_LIMIT_DEG: f64 = 89.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {lat} is within the polar region (|lat| >= {POLAR_LIMIT_DEG})")]
    PolarRegion { lat: f64 },
    #[error("coordinate out of range: lat={lat}, lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("length must be positive and finite, got {0} m")]
    InvalidLength(f64),
}

/// A latitude/longitude pair in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Checked constructor; rejects anything outside `[-90, 90] x [-180, 180]`.
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = GeoPoint { lat, lon };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(GeoError::InvalidCoordinate { lat, lon })
        }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Offset from a city centre in integer half-metres.
///
/// Half-metres are used so that `B/2` is always representable when a box side
/// `B` is an odd number of metres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalOffset {
    /// half-metres east
    pub dx: i64,
    /// half-metres north
    pub dy: i64,
}

impl LocalOffset {
    pub const ORIGIN: LocalOffset = LocalOffset { dx: 0, dy: 0 };

    pub const fn new(dx: i64, dy: i64) -> Self {
        LocalOffset { dx, dy }
    }

    /// Ordering key used for canonical output: south-to-north rows, then west-to-east.
    pub fn row_major_key(&self) -> (i64, i64) {
        (self.dy, self.dx)
    }
}

/// Axis-aligned box in degrees with half-open membership: a point belongs iff
/// `min <= coord < max` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn contains(&self, p: GeoPoint) -> bool {
        self.min_lat <= p.lat
            && p.lat < self.max_lat
            && self.min_lon <= p.lon
            && p.lon < self.max_lon
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: 0.5 * (self.min_lat + self.max_lat),
            lon: 0.5 * (self.min_lon + self.max_lon),
        }
    }

    /// True when the two boxes share a region of positive area.
    pub fn overlaps(&self, other: &BBox) -> bool {
        self.min_lat < other.max_lat
            && other.min_lat < self.max_lat
            && self.min_lon < other.max_lon
            && other.min_lon < self.max_lon
    }

    pub fn is_well_formed(&self) -> bool {
        self.min_lat < self.max_lat && self.min_lon < self.max_lon
    }
}

fn check_latitude(lat: f64) -> Result<(), GeoError> {
    if !lat.is_finite() || lat.abs() >= POLAR_LIMIT_DEG {
        return Err(GeoError::PolarRegion { lat });
    }
    Ok(())
}

/// Converts a length in metres to `(dlat, dlon)` in degrees at latitude `at_lat`.
pub fn meters_to_degrees(b_meters: f64, at_lat: f64) -> Result<(f64, f64), GeoError> {
    if !(b_meters.is_finite() && b_meters > 0.0) {
        return Err(GeoError::InvalidLength(b_meters));
    }
    check_latitude(at_lat)?;
    let dlat = b_meters / METERS_PER_DEGREE;
    let dlon = b_meters / (METERS_PER_DEGREE * at_lat.to_radians().cos());
    Ok((dlat, dlon))
}

/// Decodes a lattice offset into a geographic point using the city-centre scale.
pub fn offset_to_geo(center: GeoPoint, off: LocalOffset) -> Result<GeoPoint, GeoError> {
    check_latitude(center.lat)?;
    let lon_scale = METERS_PER_DEGREE * center.lat.to_radians().cos();
    let lat = center.lat + (off.dy as f64 / 2.0) / METERS_PER_DEGREE;
    let lon = center.lon + (off.dx as f64 / 2.0) / lon_scale;
    GeoPoint::new(lat, lon)
}

/// Box of side `b_real_m` metres centred on `center`, with the degree size taken
/// at `city_center_lat`.
pub fn cell_bbox(center: GeoPoint, b_real_m: f64, city_center_lat: f64) -> Result<BBox, GeoError> {
    let (dlat, dlon) = meters_to_degrees(b_real_m, city_center_lat)?;
    Ok(BBox {
        min_lat: center.lat - 0.5 * dlat,
        max_lat: center.lat + 0.5 * dlat,
        min_lon: center.lon - 0.5 * dlon,
        max_lon: center.lon + 0.5 * dlon,
    })
}

/// Lattice-exact variant of [`cell_bbox`]: the box edges are decoded from the
/// integer offsets `off ± b_real_m` (half-metres), so neighbouring cells share
/// identical boundary values and the cells of one city tile its square without
/// gaps or overlaps.
pub fn lattice_cell_bbox(
    city_center: GeoPoint,
    off: LocalOffset,
    b_real_m: i64,
) -> Result<BBox, GeoError> {
    if b_real_m <= 0 {
        return Err(GeoError::InvalidLength(b_real_m as f64));
    }
    let sw = offset_to_geo(
        city_center,
        LocalOffset::new(off.dx - b_real_m, off.dy - b_real_m),
    )?;
    let ne = offset_to_geo(
        city_center,
        LocalOffset::new(off.dx + b_real_m, off.dy + b_real_m),
    )?;
    Ok(BBox {
        min_lat: sw.lat,
        max_lat: ne.lat,
        min_lon: sw.lon,
        max_lon: ne.lon,
    })
}

/// Local planar distance in metres between two nearby points, using the
/// equirectangular scale at `ref_lat`.
pub fn local_distance_m(a: GeoPoint, b: GeoPoint, ref_lat: f64) -> f64 {
    let dy = (a.lat - b.lat) * METERS_PER_DEGREE;
    let dx = (a.lon - b.lon) * METERS_PER_DEGREE * ref_lat.to_radians().cos();
    dx.hypot(dy)
}
