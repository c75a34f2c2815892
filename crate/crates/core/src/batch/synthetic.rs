//! Deterministic synthetic cities for desk-scale runs.
//!
//! A synthetic city sits on the equator, where a degree has the same length on
//! both axes, so a square-pixel raster can line up one pixel per grid cell.
//! Pixel values are the pixel's row-major index, which makes the expected value
//! of every edge computable from its midpoint alone.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map};

use super::{BatchError, CityRecord};
use crate::geo::{self, GeoPoint, LocalOffset};
use crate::graph::{Edge, ElementId, Node, RoadGraph};
use crate::output::write_atomic;
use crate::raster::RasterGrid;
use crate::rasterizer::{derive_spec, rasterize, GridSpec};

pub const SYNTHETIC_FEATURE: &str = "pm25";
pub const SYNTHETIC_NODATA: f64 = -9999.0;

const HIGHWAYS: [&str; 5] = ["primary", "secondary", "tertiary", "residential", "service"];

#[derive(Debug, Clone)]
pub struct SyntheticCity {
    pub city_id: String,
    pub center: GeoPoint,
    pub a_m: f64,
    pub spec: GridSpec,
    pub graph: RoadGraph,
    pub raster: RasterGrid,
    /// Value each edge should receive: the index of the cell that holds its
    /// midpoint by construction.
    pub expected: BTreeMap<ElementId, f64>,
}

/// Builds a synthetic city in memory.
pub fn synthetic_city(
    seed: u64,
    a_m: f64,
    r_m: f64,
    edges_per_cell: usize,
) -> Result<SyntheticCity, BatchError> {
    let spec = derive_spec(a_m, r_m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // whole thousandths of a degree keep the file text short
    let lon = f64::from(rng.gen_range(-150_000..=150_000)) / 1000.0;
    let center = GeoPoint::new(0.0, lon).map_err(crate::rasterizer::RasterizeError::from)?;
    let centers = rasterize(center, &spec)?;

    let s = spec.s as usize;
    let b = spec.b_real_m;
    let half_side = spec.s as i64 * b;
    let sw = geo::offset_to_geo(center, LocalOffset::new(-half_side, -half_side))
        .map_err(crate::rasterizer::RasterizeError::from)?;
    let cellsize = b as f64 / geo::METERS_PER_DEGREE;
    let values = (0..s * s).map(|i| i as f64).collect();
    let raster = RasterGrid::new(
        s,
        s,
        sw.lon,
        sw.lat,
        cellsize,
        Some(SYNTHETIC_NODATA),
        values,
    )
    .map_err(|e| BatchError::Synthetic(e.to_string()))?
    .with_feature_name(SYNTHETIC_FEATURE);

    let mut graph = RoadGraph::new();
    let mut expected = BTreeMap::new();
    let mut next_node = 0i64;
    let b_m = b as f64;
    for (cell, off) in centers.offsets.iter().enumerate() {
        // canonical order runs south to north; raster rows run north to south
        let (row_from_south, col) = (cell / s, cell % s);
        let pixel_index = (s - 1 - row_from_south) * s + col;
        for _ in 0..edges_per_cell {
            // midpoint at least 10% of a cell away from every boundary
            let mx = off.dx as f64 / 2.0 + rng.gen_range(-0.4..0.4) * b_m;
            let my = off.dy as f64 / 2.0 + rng.gen_range(-0.4..0.4) * b_m;
            // half-length up to 0.9 cells, so many edges cross cell boundaries
            let half = rng.gen_range(0.05..0.9) * b_m;
            let a1 = rng.gen_range(0.0..2.0 * PI);
            let bent = rng.gen_bool(0.5);
            let a2 = if bent {
                a1 + rng.gen_range(-0.8..0.8)
            } else {
                a1
            };

            let to_geo = |x: f64, y: f64| GeoPoint {
                lat: center.lat + y / geo::METERS_PER_DEGREE,
                lon: center.lon + x / geo::METERS_PER_DEGREE,
            };
            let start = to_geo(mx - half * a1.cos(), my - half * a1.sin());
            let mid = to_geo(mx, my);
            let end = to_geo(mx + half * a2.cos(), my + half * a2.sin());
            let geometry = if bent {
                vec![start, mid, end]
            } else {
                vec![start, end]
            };

            let (u, v) = (ElementId::Int(next_node), ElementId::Int(next_node + 1));
            next_node += 2;
            for (id, position) in [(u.clone(), start), (v.clone(), end)] {
                graph
                    .add_node(Node {
                        id,
                        position,
                        attrs: Map::new(),
                    })
                    .map_err(|e| BatchError::Synthetic(e.to_string()))?;
            }
            let id = ElementId::Text(format!("e{}", graph.edge_count()));
            let mut attrs = Map::new();
            attrs.insert(
                "highway".into(),
                json!(HIGHWAYS[rng.gen_range(0..HIGHWAYS.len())]),
            );
            attrs.insert("length".into(), json!((2.0 * half * 10.0).round() / 10.0));
            attrs.insert(
                "osmid".into(),
                json!(rng.gen_range(1_000_000i64..9_999_999)),
            );
            graph
                .add_edge(Edge {
                    id: id.clone(),
                    u,
                    v,
                    geometry,
                    attrs,
                })
                .map_err(|e| BatchError::Synthetic(e.to_string()))?;
            expected.insert(id, pixel_index as f64);
        }
    }

    Ok(SyntheticCity {
        city_id: format!("synthetic-{seed}"),
        center,
        a_m,
        spec,
        graph,
        raster,
        expected,
    })
}

/// Writes `<id>.geojson` and `<id>.asc` into `out_dir` and returns the matching
/// [`CityRecord`].
pub fn gen_synthetic(
    seed: u64,
    a_m: f64,
    r_m: f64,
    edges_per_cell: usize,
    out_dir: &Path,
) -> Result<(SyntheticCity, CityRecord), BatchError> {
    let city = synthetic_city(seed, a_m, r_m, edges_per_cell)?;
    let graph_path = out_dir.join(format!("{}.geojson", city.city_id));
    let raster_path = out_dir.join(format!("{}.asc", city.city_id));
    let io = |p: &Path, e: std::io::Error| BatchError::Io(format!("{}: {e}", p.display()));
    write_atomic(&graph_path, city.graph.to_geojson_string().as_bytes())
        .map_err(|e| io(&graph_path, e))?;
    write_atomic(&raster_path, city.raster.to_ascii_grid().as_bytes())
        .map_err(|e| io(&raster_path, e))?;
    let record = CityRecord {
        city_id: city.city_id.clone(),
        center: city.center,
        a_m,
        graph_path,
        features: vec![(SYNTHETIC_FEATURE.to_string(), raster_path)],
    };
    Ok((city, record))
}
