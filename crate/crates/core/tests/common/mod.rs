//! Brute-force oracles shared by the integration tests. They work from first
//! principles (metres on a flat local plane, linear scans) and share no code
//! with the library paths they check.

#![allow(dead_code)]

use gridfuse::graph::Edge;
use gridfuse::{GeoPoint, GridSpec, RasterGrid, RoadGraph};

pub const M_PER_DEG: f64 = 111_320.0;

/// Arc-length midpoint of a polyline on a plane where longitude is scaled by
/// the cosine of the first vertex's latitude.
pub fn midpoint(line: &[GeoPoint]) -> GeoPoint {
    let k = line[0].lat.to_radians().cos();
    let seg = |a: &GeoPoint, b: &GeoPoint| {
        ((b.lat - a.lat).powi(2) + ((b.lon - a.lon) * k).powi(2)).sqrt()
    };
    let total: f64 = line.windows(2).map(|w| seg(&w[0], &w[1])).sum();
    if total == 0.0 {
        return line[0];
    }
    let mut left = total / 2.0;
    for w in line.windows(2) {
        let len = seg(&w[0], &w[1]);
        if left <= len && len > 0.0 {
            let t = left / len;
            return GeoPoint {
                lat: w[0].lat + t * (w[1].lat - w[0].lat),
                lon: w[0].lon + t * (w[1].lon - w[0].lon),
            };
        }
        left -= len;
    }
    *line.last().unwrap()
}

/// Cell index in canonical order (south to north, west to east) holding `p`,
/// or `None` outside the square.
pub fn cell_of(center: GeoPoint, spec: &GridSpec, p: GeoPoint) -> Option<usize> {
    let s = spec.s as f64;
    let b = spec.b_real_m as f64;
    let x = (p.lon - center.lon) * M_PER_DEG * center.lat.to_radians().cos();
    let y = (p.lat - center.lat) * M_PER_DEG;
    let col = (x / b + s / 2.0).floor();
    let row = (y / b + s / 2.0).floor();
    if col < 0.0 || row < 0.0 || col >= s || row >= s {
        return None;
    }
    Some(row as usize * spec.s as usize + col as usize)
}

/// Geographic centre of canonical cell `k`.
pub fn cell_center(center: GeoPoint, spec: &GridSpec, k: usize) -> GeoPoint {
    let s = spec.s as f64;
    let b = spec.b_real_m as f64;
    let (row, col) = ((k / spec.s as usize) as f64, (k % spec.s as usize) as f64);
    let x = (col + 0.5 - s / 2.0) * b;
    let y = (row + 0.5 - s / 2.0) * b;
    GeoPoint {
        lat: center.lat + y / M_PER_DEG,
        lon: center.lon + x / (M_PER_DEG * center.lat.to_radians().cos()),
    }
}

/// Value of the raster pixel whose extent holds `p`, found by scanning every
/// pixel.
pub fn pixel_value(raster: &RasterGrid, p: GeoPoint) -> Option<f64> {
    let top = raster.yllcorner + raster.nrows as f64 * raster.cellsize;
    for row in 0..raster.nrows {
        for col in 0..raster.ncols {
            let west = raster.xllcorner + col as f64 * raster.cellsize;
            let north = top - row as f64 * raster.cellsize;
            if p.lon >= west
                && p.lon < west + raster.cellsize
                && p.lat < north
                && p.lat >= north - raster.cellsize
            {
                let v = raster.values[row * raster.ncols + col];
                return (Some(v) != raster.nodata).then_some(v);
            }
        }
    }
    None
}

/// Expected fused value of an edge: midpoint, then cell, then pixel.
pub fn expected_value(
    center: GeoPoint,
    spec: &GridSpec,
    raster: &RasterGrid,
    edge: &Edge,
) -> Option<f64> {
    let cell = cell_of(center, spec, midpoint(&edge.geometry))?;
    pixel_value(raster, cell_center(center, spec, cell))
}

/// The graph as GeoJSON text with `feature` removed from every edge.
pub fn without_feature(graph: &RoadGraph, feature: &str) -> String {
    let mut doc = graph.to_geojson();
    for f in doc["features"].as_array_mut().unwrap() {
        if f["geometry"]["type"] == "LineString" {
            f["properties"].as_object_mut().unwrap().remove(feature);
        }
    }
    serde_json::to_string(&doc).unwrap()
}

/// Adds `n` straight or bent edges placed anywhere within 1.3 times the
/// square's half-side, so some end up crossing the outer boundary or lying
/// entirely outside it.
pub fn add_random_edges(
    graph: &mut RoadGraph,
    center: GeoPoint,
    spec: &GridSpec,
    n: usize,
    rng: &mut impl rand::Rng,
) {
    use gridfuse::graph::Node;
    use serde_json::{json, Map};

    let half = spec.covered_side_m() as f64 / 2.0 * 1.3;
    let k = center.lat.to_radians().cos();
    let to_geo = |x: f64, y: f64| GeoPoint {
        lat: center.lat + y / M_PER_DEG,
        lon: center.lon + x / (M_PER_DEG * k),
    };
    let base = graph.node_count() as i64 + 1_000_000;
    for i in 0..n as i64 {
        let mut pts: Vec<GeoPoint> = Vec::new();
        let vertices = rng.gen_range(2..=4);
        let (mut x, mut y) = (rng.gen_range(-half..half), rng.gen_range(-half..half));
        for _ in 0..vertices {
            pts.push(to_geo(x, y));
            x += rng.gen_range(-1.0..1.0) * spec.b_real_m as f64;
            y += rng.gen_range(-1.0..1.0) * spec.b_real_m as f64;
        }
        let (u, v) = (base + 2 * i, base + 2 * i + 1);
        graph
            .add_node(Node {
                id: u.into(),
                position: pts[0],
                attrs: Map::new(),
            })
            .unwrap();
        graph
            .add_node(Node {
                id: v.into(),
                position: *pts.last().unwrap(),
                attrs: Map::new(),
            })
            .unwrap();
        let mut attrs = Map::new();
        attrs.insert("highway".into(), json!("unclassified"));
        graph
            .add_edge(Edge {
                id: format!("w{i}").into(),
                u: u.into(),
                v: v.into(),
                geometry: pts,
                attrs,
            })
            .unwrap();
    }
}
