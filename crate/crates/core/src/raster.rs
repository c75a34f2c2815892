//! ESRI ASCII grid rasters and value queries.

use std::fmt::Write as _;
use std::io::Read;

use thiserror::Error;

use crate::geo::{BBox, GeoPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("point ({lat}, {lon}) is outside the raster extent")]
    OutOfExtent { lat: f64, lon: f64 },
    #[error("no data at ({lat}, {lon})")]
    NoData { lat: f64, lon: f64 },
    #[error("i/o error: {0}")]
    Io(String),
}

impl RasterError {
    fn parse(line: usize, reason: impl Into<String>) -> Self {
        RasterError::Parse {
            line,
            reason: reason.into(),
        }
    }
}

/// A north-up grid of values with square pixels in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub ncols: usize,
    pub nrows: usize,
    /// longitude of the west edge
    pub xllcorner: f64,
    /// latitude of the south edge
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: Option<f64>,
    /// Row-major, top (northernmost) row first.
    pub values: Vec<f64>,
    pub feature_name: String,
}

const HEADER_KEYS: [&str; 8] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "xllcenter",
    "yllcenter",
    "cellsize",
    "nodata_value",
];

impl RasterGrid {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata: Option<f64>,
        values: Vec<f64>,
    ) -> Result<Self, RasterError> {
        if ncols == 0 || nrows == 0 {
            return Err(RasterError::parse(0, "ncols and nrows must be positive"));
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(RasterError::parse(
                0,
                format!("cellsize must be positive, got {cellsize}"),
            ));
        }
        if values.len() != ncols * nrows {
            return Err(RasterError::parse(
                0,
                format!(
                    "value count: expected {}, got {}",
                    ncols * nrows,
                    values.len()
                ),
            ));
        }
        Ok(RasterGrid {
            ncols,
            nrows,
            xllcorner,
            yllcorner,
            cellsize,
            nodata,
            values,
            feature_name: "value".to_string(),
        })
    }

    pub fn with_feature_name(mut self, name: impl Into<String>) -> Self {
        self.feature_name = name.into();
        self
    }

    pub fn extent(&self) -> BBox {
        BBox {
            min_lat: self.yllcorner,
            max_lat: self.yllcorner + self.nrows as f64 * self.cellsize,
            min_lon: self.xllcorner,
            max_lon: self.xllcorner + self.ncols as f64 * self.cellsize,
        }
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    /// Centre of pixel `(row, col)`, rows counted from the top.
    pub fn pixel_center(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint {
            lat: self.yllcorner + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize,
            lon: self.xllcorner + (col as f64 + 0.5) * self.cellsize,
        }
    }

    fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || self.nodata == Some(v)
    }

    /// Pixel containing `p`, with half-open pixel cells.
    pub fn locate(&self, p: GeoPoint) -> Option<(usize, usize)> {
        if !self.extent().contains(p) {
            return None;
        }
        let col = ((p.lon - self.xllcorner) / self.cellsize).floor();
        let from_bottom = ((p.lat - self.yllcorner) / self.cellsize).floor();
        let col = (col.max(0.0) as usize).min(self.ncols - 1);
        let from_bottom = (from_bottom.max(0.0) as usize).min(self.nrows - 1);
        Some((self.nrows - 1 - from_bottom, col))
    }

    pub fn query_point(&self, p: GeoPoint) -> Result<f64, RasterError> {
        let (row, col) = self.locate(p).ok_or(RasterError::OutOfExtent {
            lat: p.lat,
            lon: p.lon,
        })?;
        let v = self.value(row, col);
        if self.is_nodata(v) {
            return Err(RasterError::NoData {
                lat: p.lat,
                lon: p.lon,
            });
        }
        Ok(v)
    }

    /// Mean of the valid pixels whose centres lie in `bbox`, falling back to the
    /// pixel under the box centre when no valid centre is inside.
    pub fn query_bbox_mean(&self, bbox: &BBox) -> Result<f64, RasterError> {
        if !self.extent().overlaps(bbox) {
            let c = bbox.center();
            return Err(RasterError::OutOfExtent {
                lat: c.lat,
                lon: c.lon,
            });
        }
        // candidate window, padded by one pixel; membership is decided below
        // with the exact pixel-centre test
        let cs = self.cellsize;
        let col_lo = ((bbox.min_lon - self.xllcorner) / cs - 1.0)
            .floor()
            .max(0.0) as usize;
        let col_hi =
            (((bbox.max_lon - self.xllcorner) / cs + 1.0).ceil().max(0.0) as usize).min(self.ncols);
        let top = self.yllcorner + self.nrows as f64 * cs;
        let row_lo = ((top - bbox.max_lat) / cs - 1.0).floor().max(0.0) as usize;
        let row_hi = (((top - bbox.min_lat) / cs + 1.0).ceil().max(0.0) as usize).min(self.nrows);

        let mut sum = 0.0;
        let mut n = 0usize;
        for row in row_lo..row_hi {
            for col in col_lo..col_hi {
                if !bbox.contains(self.pixel_center(row, col)) {
                    continue;
                }
                let v = self.value(row, col);
                if !self.is_nodata(v) {
                    sum += v;
                    n += 1;
                }
            }
        }
        if n > 0 {
            Ok(sum / n as f64)
        } else {
            self.query_point(bbox.center())
        }
    }

    /// Serialises in ESRI ASCII grid format. Numbers use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_ascii_grid(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.xllcorner);
        let _ = writeln!(out, "yllcorner {}", self.yllcorner);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        if let Some(nd) = self.nodata {
            let _ = writeln!(out, "NODATA_value {nd}");
        }
        for row in self.values.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Parses an ESRI ASCII grid. Header keys are case-insensitive and may come in
/// any order; `NODATA_value` is optional. `xllcenter`/`yllcenter` are accepted
/// and converted to corners.
pub fn parse_ascii_grid<R: Read>(mut source: R) -> Result<RasterGrid, RasterError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| RasterError::Io(e.to_string()))?;
    parse_ascii_grid_str(&text)
}

pub fn parse_ascii_grid_str(text: &str) -> Result<RasterGrid, RasterError> {
    let mut header: Vec<(String, f64, usize)> = Vec::new();
    let mut lines = text.lines().enumerate().peekable();

    while let Some(&(idx, line)) = lines.peek() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            lines.next();
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let key = parts.next().unwrap_or_default().to_ascii_lowercase();
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        if !HEADER_KEYS.contains(&key.as_str()) {
            return Err(RasterError::parse(
                lineno,
                format!("unknown header key `{key}`"),
            ));
        }
        let raw = parts
            .next()
            .ok_or_else(|| RasterError::parse(lineno, format!("missing value for `{key}`")))?;
        if parts.next().is_some() {
            return Err(RasterError::parse(
                lineno,
                format!("trailing tokens after `{key}`"),
            ));
        }
        let value: f64 = raw
            .parse()
            .map_err(|_| RasterError::parse(lineno, format!("bad number `{raw}` for `{key}`")))?;
        if header.iter().any(|(k, _, _)| *k == key) {
            return Err(RasterError::parse(
                lineno,
                format!("duplicate header key `{key}`"),
            ));
        }
        header.push((key, value, lineno));
        lines.next();
    }

    let data_line = lines
        .peek()
        .map(|(i, _)| i + 1)
        .unwrap_or(text.lines().count() + 1);
    let get = |k: &str| {
        header
            .iter()
            .find(|(key, _, _)| key == k)
            .map(|(_, v, l)| (*v, *l))
    };
    let require = |k: &str| {
        get(k).ok_or_else(|| RasterError::parse(data_line, format!("missing `{k}` header")))
    };

    let count = |k: &str| -> Result<usize, RasterError> {
        let (v, l) = require(k)?;
        if v < 1.0 || v.fract() != 0.0 {
            return Err(RasterError::parse(
                l,
                format!("`{k}` must be a positive integer, got {v}"),
            ));
        }
        Ok(v as usize)
    };
    let ncols = count("ncols")?;
    let nrows = count("nrows")?;
    let (cellsize, cs_line) = require("cellsize")?;
    if !(cellsize.is_finite() && cellsize > 0.0) {
        return Err(RasterError::parse(
            cs_line,
            format!("cellsize must be positive, got {cellsize}"),
        ));
    }
    let xll = match (get("xllcorner"), get("xllcenter")) {
        (Some((v, _)), None) => v,
        (None, Some((v, _))) => v - 0.5 * cellsize,
        (Some(_), Some((_, l))) => {
            return Err(RasterError::parse(l, "both xllcorner and xllcenter given"))
        }
        (None, None) => return Err(RasterError::parse(data_line, "missing `xllcorner` header")),
    };
    let yll = match (get("yllcorner"), get("yllcenter")) {
        (Some((v, _)), None) => v,
        (None, Some((v, _))) => v - 0.5 * cellsize,
        (Some(_), Some((_, l))) => {
            return Err(RasterError::parse(l, "both yllcorner and yllcenter given"))
        }
        (None, None) => return Err(RasterError::parse(data_line, "missing `yllcorner` header")),
    };
    let nodata = get("nodata_value").map(|(v, _)| v);

    let expected = ncols * nrows;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = data_line;
    for (idx, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| RasterError::parse(idx + 1, format!("bad value `{tok}`")))?;
            if values.len() == expected {
                return Err(RasterError::parse(
                    idx + 1,
                    format!("value count: more than the expected {expected} values"),
                ));
            }
            values.push(v);
        }
        last_line = idx + 1;
    }
    if values.len() != expected {
        return Err(RasterError::parse(
            last_line,
            format!("value count: expected {expected}, got {}", values.len()),
        ));
    }
    RasterGrid::new(ncols, nrows, xll, yll, cellsize, nodata, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_BY_TWO: &str =
        "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n3 4\n";

    fn brute_force_mean(g: &RasterGrid, b: &BBox) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0;
        for row in 0..g.nrows {
            for col in 0..g.ncols {
                let c = g.pixel_center(row, col);
                let inside = b.min_lat <= c.lat
                    && c.lat < b.max_lat
                    && b.min_lon <= c.lon
                    && c.lon < b.max_lon;
                let v = g.values[row * g.ncols + col];
                if inside && Some(v) != g.nodata {
                    sum += v;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    #[test]
    fn minimal_grid() {
        let g = parse_ascii_grid(TWO_BY_TWO.as_bytes()).unwrap();
        assert_eq!((g.ncols, g.nrows), (2, 2));
        assert_eq!(g.values, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.value(0, 1), 2.0);
        assert_eq!(g.nodata, Some(-9999.0));
    }

    #[test]
    fn header_is_case_insensitive_and_unordered() {
        let text = "CELLSIZE 0.5\nNROWS 1\nyllcorner 10\nNCOLS 3\nXLLCORNER -5\n7 8 9\n";
        let g = parse_ascii_grid_str(text).unwrap();
        assert_eq!(
            (g.ncols, g.nrows, g.cellsize, g.xllcorner, g.yllcorner),
            (3, 1, 0.5, -5.0, 10.0)
        );
        assert_eq!(g.nodata, None);
    }

    #[test]
    fn center_registration() {
        let text = "ncols 1\nnrows 1\nxllcenter 0.5\nyllcenter 0.5\ncellsize 1\n3\n";
        let g = parse_ascii_grid_str(text).unwrap();
        assert_eq!((g.xllcorner, g.yllcorner), (0.0, 0.0));
    }

    #[test]
    fn missing_cellsize() {
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\n1 2\n3 4\n";
        let err = parse_ascii_grid_str(text).unwrap_err();
        assert!(
            matches!(&err, RasterError::Parse { reason, .. } if reason.contains("cellsize")),
            "{err}"
        );
    }

    #[test]
    fn short_value_list() {
        let text = "ncols 3\nnrows 3\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n4 5 6\n7 8\n";
        let err = parse_ascii_grid_str(text).unwrap_err();
        assert_eq!(
            err,
            RasterError::Parse {
                line: 8,
                reason: "value count: expected 9, got 8".into()
            }
        );
    }

    #[test]
    fn malformed_inputs() {
        for text in [
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4 5\n",
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 x\n",
            "ncols 2.5\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4\n",
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize -1\n1 2\n3 4\n",
            "ncols 2\nncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4\n",
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nfoo 3\n1 2\n3 4\n",
            "",
        ] {
            assert!(
                matches!(parse_ascii_grid_str(text), Err(RasterError::Parse { .. })),
                "{text:?}"
            );
        }
    }

    #[test]
    fn point_queries() {
        let g = parse_ascii_grid_str(TWO_BY_TWO).unwrap();
        // lower-left pixel holds 3: row 1 from the top, col 0
        assert_eq!(
            g.query_point(GeoPoint {
                lat: 0.25,
                lon: 0.25
            })
            .unwrap(),
            3.0
        );
        assert_eq!(
            g.query_point(GeoPoint {
                lat: 1.75,
                lon: 1.75
            })
            .unwrap(),
            2.0
        );
        assert!(matches!(
            g.query_point(GeoPoint { lat: 2.0, lon: 1.0 }),
            Err(RasterError::OutOfExtent { .. })
        ));
        assert!(matches!(
            g.query_point(GeoPoint {
                lat: -0.1,
                lon: 1.0
            }),
            Err(RasterError::OutOfExtent { .. })
        ));
    }

    #[test]
    fn nodata_point() {
        let text =
            "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value -1\n-1 5\n";
        let g = parse_ascii_grid_str(text).unwrap();
        assert!(matches!(
            g.query_point(GeoPoint { lat: 0.5, lon: 0.5 }),
            Err(RasterError::NoData { .. })
        ));
        let whole = BBox {
            min_lat: 0.0,
            max_lat: 1.0,
            min_lon: 0.0,
            max_lon: 2.0,
        };
        assert_eq!(g.query_bbox_mean(&whole).unwrap(), 5.0);
        let left = BBox {
            min_lat: 0.0,
            max_lat: 1.0,
            min_lon: 0.0,
            max_lon: 1.0,
        };
        assert!(matches!(
            g.query_bbox_mean(&left),
            Err(RasterError::NoData { .. })
        ));
    }

    #[test]
    fn uniform_raster() {
        let g = RasterGrid::new(4, 3, 10.0, 20.0, 0.25, None, vec![7.0; 12]).unwrap();
        assert_eq!(
            g.query_point(GeoPoint {
                lat: 20.3,
                lon: 10.9
            })
            .unwrap(),
            7.0
        );
        let b = BBox {
            min_lat: 20.1,
            max_lat: 20.6,
            min_lon: 10.2,
            max_lon: 10.7,
        };
        assert_eq!(g.query_bbox_mean(&b).unwrap(), 7.0);
    }

    #[test]
    fn box_mean_over_two_pixels() {
        let g = parse_ascii_grid_str(TWO_BY_TWO).unwrap();
        // left column: pixel centres (1.5, 0.5) -> 1 and (0.5, 0.5) -> 3
        let b = BBox {
            min_lat: 0.0,
            max_lat: 2.0,
            min_lon: 0.0,
            max_lon: 1.0,
        };
        assert_eq!(g.query_bbox_mean(&b).unwrap(), 2.0);
        assert_eq!(brute_force_mean(&g, &b), Some(2.0));
    }

    #[test]
    fn sub_pixel_box_falls_back_to_point() {
        let g = RasterGrid::new(
            3,
            3,
            0.0,
            0.0,
            1.0,
            None,
            vec![1.0, 1.0, 1.0, 1.0, 5.0, 1.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let b = BBox {
            min_lat: 1.1,
            max_lat: 1.3,
            min_lon: 1.6,
            max_lon: 1.8,
        };
        assert_eq!(brute_force_mean(&g, &b), None);
        assert_eq!(g.query_bbox_mean(&b).unwrap(), 5.0);
    }

    #[test]
    fn disjoint_box() {
        let g = parse_ascii_grid_str(TWO_BY_TWO).unwrap();
        let b = BBox {
            min_lat: 5.0,
            max_lat: 6.0,
            min_lon: 5.0,
            max_lon: 6.0,
        };
        assert!(matches!(
            g.query_bbox_mean(&b),
            Err(RasterError::OutOfExtent { .. })
        ));
    }

    fn arb_grid() -> impl Strategy<Value = RasterGrid> {
        (
            1usize..7,
            1usize..7,
            -50.0f64..50.0,
            -50.0f64..50.0,
            0.01f64..2.0,
        )
            .prop_flat_map(|(ncols, nrows, x, y, cs)| {
                prop::collection::vec(
                    prop_oneof![4 => -100.0f64..100.0, 1 => Just(-9999.0)],
                    ncols * nrows,
                )
                .prop_map(move |values| {
                    RasterGrid::new(ncols, nrows, x, y, cs, Some(-9999.0), values).unwrap()
                })
            })
    }

    proptest! {
        #[test]
        fn box_mean_matches_brute_force(g in arb_grid(), fx in -0.2f64..1.2, fy in -0.2f64..1.2,
                                        w in 0.01f64..1.0, h in 0.01f64..1.0) {
            let e = g.extent();
            let min_lon = e.min_lon + fx * (e.max_lon - e.min_lon);
            let min_lat = e.min_lat + fy * (e.max_lat - e.min_lat);
            let b = BBox { min_lat, max_lat: min_lat + h * (e.max_lat - e.min_lat),
                           min_lon, max_lon: min_lon + w * (e.max_lon - e.min_lon) };
            match (brute_force_mean(&g, &b), g.query_bbox_mean(&b)) {
                (Some(want), got) => prop_assert_eq!(got.unwrap().to_bits(), want.to_bits()),
                (None, got) => {
                    let fallback = if e.overlaps(&b) { g.query_point(b.center()) }
                                   else { Err(RasterError::OutOfExtent { lat: 0.0, lon: 0.0 }) };
                    prop_assert_eq!(got.is_ok(), fallback.is_ok());
                    if let (Ok(a), Ok(bv)) = (got, fallback) { prop_assert_eq!(a, bv); }
                }
            }
        }

        #[test]
        fn pixel_centres_hit_their_pixel(g in arb_grid()) {
            for row in 0..g.nrows {
                for col in 0..g.ncols {
                    prop_assert_eq!(g.locate(g.pixel_center(row, col)), Some((row, col)));
                }
            }
        }

        #[test]
        fn serialise_round_trip(g in arb_grid()) {
            let again = parse_ascii_grid_str(&g.to_ascii_grid()).unwrap();
            prop_assert_eq!(&again, &g);
            let thrice = parse_ascii_grid_str(&again.to_ascii_grid()).unwrap();
            prop_assert_eq!(thrice, again);
        }
    }
}
