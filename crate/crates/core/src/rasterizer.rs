//! Perfect-square rasterisation of a square city map.
//!
//! A city of side `A` metres rasterised at resolution `r` has `s = round(A/r)`
//! steps per side and `G = s²` target cells. The cell centres are reached by
//! repeatedly turning points into the four corners of a box around them:
//!
//! * even `s`: a virtual lattice is grown from the city centre with box side
//!   `2·B_real`, through `s/2 - 1` layers whose distinct-vertex counts run
//!   4, 9, 16, …; each final vertex then splits into four real centres.
//! * odd `s >= 3`: the same growth with box side `B_real`, through `s - 2`
//!   layers, and a final expansion that merges shared corners into `s²` centres.
//!
//! All arithmetic happens on integer half-metre offsets, so duplicates are
//! detected exactly. [`rasterize_quantized`] keeps the older floating-degree
//! pipeline with decimal rounding for comparison.

use std::collections::HashSet;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::geo::{self, GeoError, GeoPoint, LocalOffset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterizeError {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("grid count mismatch: expected {expected} centres, got {got}")]
    CountMismatch { expected: u64, got: u64 },
    #[error("decimals must be within 1..=9, got {0}")]
    InvalidDecimals(u32),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// `s <= 1`: the city is a single cell.
    Trivial,
    Even,
    Odd,
}

impl std::fmt::Display for Parity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Parity::Trivial => "trivial",
            Parity::Even => "even",
            Parity::Odd => "odd",
        })
    }
}

/// Rasterisation parameters derived from city size and raster resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub a_m: f64,
    pub r_m: f64,
    pub s: u64,
    pub g: u64,
    pub parity: Parity,
    pub i_total: u64,
    pub i_vir: u64,
    pub b_real_m: i64,
    pub b_vir_m: i64,
}

impl GridSpec {
    /// Expected distinct-vertex count after each virtual layer: `(n+2)²`.
    pub fn expected_virtual_counts(&self) -> Vec<u64> {
        (0..self.i_vir).map(|n| (n + 2) * (n + 2)).collect()
    }

    /// Side of the rasterised square in metres (`s · B_real`), which may differ
    /// from `A` by less than `s/2` metres when `A` is not a multiple of `s`.
    pub fn covered_side_m(&self) -> i64 {
        self.s as i64 * self.b_real_m
    }
}

/// Rounds to the nearest integer, halves away from zero.
fn nint(x: f64) -> f64 {
    x.round()
}

/// Derives the [`GridSpec`] for a city of side `a_m` at resolution `r_m`.
pub fn derive_spec(a_m: f64, r_m: f64) -> Result<GridSpec, RasterizeError> {
    if !(a_m.is_finite() && a_m > 0.0) {
        return Err(RasterizeError::InvalidSize(format!(
            "city size must be positive, got {a_m}"
        )));
    }
    if !(r_m.is_finite() && r_m > 0.0) {
        return Err(RasterizeError::InvalidSize(format!(
            "resolution must be positive, got {r_m}"
        )));
    }
    let s = nint(a_m / r_m);
    if s < 1.0 {
        return Err(RasterizeError::InvalidSize(format!(
            "city size {a_m} m rounds to zero steps at resolution {r_m} m"
        )));
    }
    if s > u32::MAX as f64 {
        return Err(RasterizeError::InvalidSize(format!("too many steps: {s}")));
    }
    let s = s as u64;
    let b_real = nint(a_m / s as f64);
    if b_real < 1.0 {
        return Err(RasterizeError::InvalidSize(format!(
            "cell side rounds to {b_real} m"
        )));
    }
    let b_real_m = b_real as i64;

    let (parity, i_total, b_vir_m) = if s <= 1 {
        (Parity::Trivial, 0, b_real_m)
    } else if s.is_multiple_of(2) {
        (Parity::Even, s / 2, 2 * b_real_m)
    } else {
        (Parity::Odd, s - 1, b_real_m)
    };

    Ok(GridSpec {
        a_m,
        r_m,
        s,
        g: s * s,
        parity,
        i_total,
        i_vir: i_total.saturating_sub(1),
        b_real_m,
        b_vir_m,
    })
}

/// The four corners of a box of side `b_m` metres around `p`, i.e. `p ± b_m/2`
/// metres on each axis, which is `p ± b_m` in half-metre units.
pub fn expand_corners(p: LocalOffset, b_m: i64) -> [LocalOffset; 4] {
    [
        LocalOffset::new(p.dx + b_m, p.dy + b_m),
        LocalOffset::new(p.dx - b_m, p.dy + b_m),
        LocalOffset::new(p.dx + b_m, p.dy - b_m),
        LocalOffset::new(p.dx - b_m, p.dy - b_m),
    ]
}

/// Grid centres of one city.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterList {
    pub city_center: GeoPoint,
    /// Distinct offsets in canonical order (by `dy`, then `dx`).
    pub offsets: Vec<LocalOffset>,
    /// Geographic positions, index-aligned with `offsets`.
    pub decoded: Vec<GeoPoint>,
    /// Distinct-vertex count after each virtual layer.
    pub virtual_counts: Vec<u64>,
}

impl CenterList {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Writes the centres as a `lat,lon` CSV with seven fractional digits.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "lat,lon")?;
        for p in &self.decoded {
            writeln!(w, "{:.7},{:.7}", p.lat, p.lon)?;
        }
        w.flush()
    }
}

/// Expands a canonical layer. Shifting a sorted layer by a constant keeps it
/// sorted, so the four corner copies are merged in linear time.
fn expand_layer(points: &[LocalOffset], b_m: i64) -> Vec<LocalOffset> {
    let shifted = |sx: i64, sy: i64| -> Vec<LocalOffset> {
        points
            .iter()
            .map(|p| LocalOffset::new(p.dx + sx * b_m, p.dy + sy * b_m))
            .collect()
    };
    let south = merge_dedup(&shifted(-1, -1), &shifted(1, -1));
    let north = merge_dedup(&shifted(-1, 1), &shifted(1, 1));
    merge_dedup(&south, &north)
}

fn merge_dedup(a: &[LocalOffset], b: &[LocalOffset]) -> Vec<LocalOffset> {
    let mut out: Vec<LocalOffset> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j == b.len() || (i < a.len() && a[i].row_major_key() <= b[j].row_major_key());
        let p = if take_a {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// Lattice part of [`rasterize`]: the final offsets plus the virtual-layer counts.
pub fn rasterize_offsets(spec: &GridSpec) -> (Vec<LocalOffset>, Vec<u64>) {
    let origin = [LocalOffset::ORIGIN];
    let mut counts = Vec::new();
    let last_virtual = match spec.parity {
        Parity::Trivial => return (origin.to_vec(), counts),
        _ if spec.i_total == 1 => origin.to_vec(),
        _ => {
            let mut layer = origin.to_vec();
            for _ in 0..spec.i_vir {
                layer = expand_layer(&layer, spec.b_vir_m);
                counts.push(layer.len() as u64);
            }
            layer
        }
    };
    (expand_layer(&last_virtual, spec.b_real_m), counts)
}

/// Computes the `G` grid centres of a city around `center`.
pub fn rasterize(center: GeoPoint, spec: &GridSpec) -> Result<CenterList, RasterizeError> {
    let (offsets, virtual_counts) = rasterize_offsets(spec);
    if offsets.len() as u64 != spec.g {
        return Err(RasterizeError::CountMismatch {
            expected: spec.g,
            got: offsets.len() as u64,
        });
    }
    let decoded = offsets
        .iter()
        .map(|&off| geo::offset_to_geo(center, off))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CenterList {
        city_center: center,
        offsets,
        decoded,
        virtual_counts,
    })
}

/// Floating-point rasterisation with duplicates detected on coordinates
/// rounded to `decimals` places.
///
/// The expansion runs in degrees from the city centre; a generated point is a
/// duplicate when its coordinates rounded to `decimals` places match an earlier
/// point of the same layer, and the first copy is kept. Distinct lattice points
/// collapse onto one key when their spacing is below `10^-decimals` degrees,
/// and copies of one point may straddle a rounding boundary, so this path can
/// fail with [`RasterizeError::CountMismatch`] where [`rasterize`] cannot.
/// Every virtual layer is checked against its `(n+2)²` count as well as the
/// final list against `G`.
///
/// `decoded` holds the final coordinates rounded to `decimals` places;
/// `offsets` are those coordinates re-encoded to the nearest half-metre.
pub fn rasterize_quantized(
    center: GeoPoint,
    spec: &GridSpec,
    decimals: u32,
) -> Result<CenterList, RasterizeError> {
    if !(1..=9).contains(&decimals) {
        return Err(RasterizeError::InvalidDecimals(decimals));
    }
    let q = QuantizedLattice::new(center, decimals)?;

    let origin = vec![center];
    let mut counts = Vec::new();
    let last_virtual = match spec.parity {
        Parity::Trivial => origin,
        _ if spec.i_total == 1 => origin,
        _ => {
            let mut layer = origin;
            for expected in spec.expected_virtual_counts() {
                layer = q.expand_layer(&layer, spec.b_vir_m)?;
                let got = layer.len() as u64;
                if got != expected {
                    return Err(RasterizeError::CountMismatch { expected, got });
                }
                counts.push(got);
            }
            layer
        }
    };
    let finals = match spec.parity {
        Parity::Trivial => last_virtual,
        _ => q.expand_layer(&last_virtual, spec.b_real_m)?,
    };
    if finals.len() as u64 != spec.g {
        return Err(RasterizeError::CountMismatch {
            expected: spec.g,
            got: finals.len() as u64,
        });
    }

    let mut pairs: Vec<(LocalOffset, GeoPoint)> = finals
        .into_iter()
        .map(|p| {
            let rounded = GeoPoint {
                lat: q.round(p.lat),
                lon: q.round(p.lon),
            };
            (q.encode(rounded), rounded)
        })
        .collect();
    pairs.sort_by_key(|(off, _)| off.row_major_key());
    let (offsets, decoded): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let distinct: HashSet<_> = offsets.iter().collect();
    if distinct.len() != offsets.len() {
        return Err(RasterizeError::CountMismatch {
            expected: spec.g,
            got: distinct.len() as u64,
        });
    }
    Ok(CenterList {
        city_center: center,
        offsets,
        decoded,
        virtual_counts: counts,
    })
}

struct QuantizedLattice {
    center: GeoPoint,
    scale: f64,
    lon_m_per_deg: f64,
}

impl QuantizedLattice {
    fn new(center: GeoPoint, decimals: u32) -> Result<Self, GeoError> {
        // validates the latitude
        geo::meters_to_degrees(1.0, center.lat)?;
        Ok(QuantizedLattice {
            center,
            scale: 10f64.powi(decimals as i32),
            lon_m_per_deg: geo::METERS_PER_DEGREE * center.lat.to_radians().cos(),
        })
    }

    fn key(&self, p: GeoPoint) -> (i64, i64) {
        (
            (p.lat * self.scale).round() as i64,
            (p.lon * self.scale).round() as i64,
        )
    }

    fn round(&self, x: f64) -> f64 {
        (x * self.scale).round() / self.scale
    }

    fn encode(&self, p: GeoPoint) -> LocalOffset {
        LocalOffset::new(
            ((p.lon - self.center.lon) * self.lon_m_per_deg * 2.0).round() as i64,
            ((p.lat - self.center.lat) * geo::METERS_PER_DEGREE * 2.0).round() as i64,
        )
    }

    fn expand_layer(&self, points: &[GeoPoint], b_m: i64) -> Result<Vec<GeoPoint>, GeoError> {
        let (dlat, dlon) = geo::meters_to_degrees(b_m as f64 / 2.0, self.center.lat)?;
        let mut seen = HashSet::new();
        let mut next = Vec::with_capacity(points.len() * 4);
        for p in points {
            for (sy, sx) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let c = GeoPoint {
                    lat: p.lat + sy * dlat,
                    lon: p.lon + sx * dlon,
                };
                if seen.insert(self.key(c)) {
                    next.push(c);
                }
            }
        }
        Ok(next)
    }
}
