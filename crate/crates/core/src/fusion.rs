//! Assigning raster values to road edges cell by cell.
//!
//! For every grid centre the cell box is built from the integer lattice, the
//! raster is sampled over that box and the value is written onto the edges
//! whose midpoint falls in the box. Edges are never split: each one belongs to
//! exactly one cell, and the per-cell edge lists must add back up to the whole
//! edge set before anything is returned.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::geo::{self, BBox, GeoError, GeoPoint};
use crate::graph::RoadGraph;
use crate::raster::{RasterError, RasterGrid};
use crate::rasterizer::{CenterList, GridSpec};

pub const DEFAULT_NODATA_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("edge conservation violated: {expected} edges in graph, {got} assigned to cells")]
    ConservationViolation { expected: usize, got: usize },
    #[error("raster coverage too low: {failed} of {cells} cells have no usable value (threshold {threshold})")]
    RasterCoverage {
        failed: usize,
        cells: usize,
        threshold: f64,
    },
    #[error("centre list has {got} entries but the grid spec expects {expected}")]
    SpecMismatch { expected: u64, got: usize },
    #[error("feature value {0} cannot be stored as an attribute")]
    NonFiniteValue(f64),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// How a cell's value is read from the raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Mean of the pixels whose centres lie in the cell box.
    #[default]
    BoxMean,
    /// The pixel under the cell centre.
    CenterPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionOptions {
    pub sampling: Sampling,
    /// Largest tolerated fraction of cells without a raster value.
    pub nodata_threshold: f64,
}

impl Default for FusionOptions {
    fn default() -> Self {
        FusionOptions {
            sampling: Sampling::BoxMean,
            nodata_threshold: DEFAULT_NODATA_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionReport {
    pub city_id: String,
    pub feature: String,
    pub g: u64,
    pub edges_total: usize,
    pub edges_assigned: usize,
    /// Edges that actually received a value (cells with nodata give none).
    pub edges_valued: usize,
    pub cells_empty: usize,
    pub cells_nodata: usize,
    pub value_min: Option<f64>,
    pub value_max: Option<f64>,
    pub value_mean: Option<f64>,
}

impl FusionReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

/// Cell boxes for every centre, built from the lattice so that they tile the
/// city square exactly.
pub fn cell_boxes(centers: &CenterList, spec: &GridSpec) -> Result<Vec<BBox>, GeoError> {
    centers
        .offsets
        .iter()
        .map(|&off| geo::lattice_cell_bbox(centers.city_center, off, spec.b_real_m))
        .collect()
}

/// Edge indices owned by each cell. An edge whose midpoint lies in no cell
/// goes to the cell with the nearest centre (lowest index on ties).
pub fn assign_edges(
    graph: &RoadGraph,
    boxes: &[BBox],
    centers: &[GeoPoint],
    ref_lat: f64,
) -> Vec<Vec<usize>> {
    let midpoints: Vec<GeoPoint> = graph.edges().par_iter().map(|e| e.midpoint()).collect();
    let index = BoxIndex::new(boxes);
    let hits: Vec<Vec<usize>> = midpoints
        .par_iter()
        .map(|&m| index.containing(boxes, m))
        .collect();

    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); boxes.len()];
    for (i, (m, cells)) in midpoints.iter().zip(&hits).enumerate() {
        if cells.is_empty() {
            let nearest = centers
                .iter()
                .enumerate()
                .map(|(k, c)| (k, geo::local_distance_m(*m, *c, ref_lat)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if let Some((k, _)) = nearest {
                owned[k].push(i);
            }
        }
        // a midpoint inside two boxes is recorded twice for the conservation check
        for &k in cells {
            owned[k].push(i);
        }
    }
    for cell in &mut owned {
        cell.sort_unstable();
    }
    owned
}

/// Uniform bucket grid over the boxes, so a point is tested only against the
/// boxes sharing its bucket.
struct BoxIndex {
    origin: (f64, f64),
    step: (f64, f64),
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl BoxIndex {
    fn new(boxes: &[BBox]) -> Self {
        let fold = |f: fn(&BBox) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
            boxes.iter().map(f).fold(init, pick)
        };
        let origin = (
            fold(|b| b.min_lat, f64::INFINITY, f64::min),
            fold(|b| b.min_lon, f64::INFINITY, f64::min),
        );
        let step = (
            fold(|b| b.max_lat - b.min_lat, 0.0, f64::max),
            fold(|b| b.max_lon - b.min_lon, 0.0, f64::max),
        );
        let mut index = BoxIndex {
            origin,
            step,
            buckets: HashMap::new(),
        };
        for (k, b) in boxes.iter().enumerate() {
            let (r0, c0) = index.bucket(b.min_lat, b.min_lon);
            let (r1, c1) = index.bucket(b.max_lat, b.max_lon);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    index.buckets.entry((r, c)).or_default().push(k);
                }
            }
        }
        index
    }

    fn bucket(&self, lat: f64, lon: f64) -> (i64, i64) {
        let axis = |v: f64, o: f64, d: f64| {
            if d > 0.0 {
                ((v - o) / d).floor() as i64
            } else {
                0
            }
        };
        (
            axis(lat, self.origin.0, self.step.0),
            axis(lon, self.origin.1, self.step.1),
        )
    }

    fn containing(&self, boxes: &[BBox], p: GeoPoint) -> Vec<usize> {
        if !(p.lat.is_finite() && p.lon.is_finite()) {
            return Vec::new();
        }
        self.buckets
            .get(&self.bucket(p.lat, p.lon))
            .map(|ks| {
                ks.iter()
                    .copied()
                    .filter(|&k| boxes[k].contains(p))
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// `#E_sum == #E_glb`, and no edge owned twice.
pub fn check_conservation(edges_total: usize, owned: &[Vec<usize>]) -> Result<usize, FusionError> {
    let assigned: usize = owned.iter().map(Vec::len).sum();
    if assigned != edges_total {
        return Err(FusionError::ConservationViolation {
            expected: edges_total,
            got: assigned,
        });
    }
    let mut seen = vec![false; edges_total];
    for &i in owned.iter().flatten() {
        if i >= edges_total || std::mem::replace(&mut seen[i], true) {
            let distinct = seen.iter().filter(|s| **s).count();
            return Err(FusionError::ConservationViolation {
                expected: edges_total,
                got: distinct,
            });
        }
    }
    Ok(assigned)
}

fn sample(
    raster: &RasterGrid,
    bbox: &BBox,
    center: GeoPoint,
    sampling: Sampling,
) -> Result<f64, RasterError> {
    match sampling {
        Sampling::BoxMean => raster.query_bbox_mean(bbox),
        Sampling::CenterPoint => raster.query_point(center),
    }
}

/// Writes the raster feature onto the graph's edges, one value per grid cell.
pub fn fuse(
    mut graph: RoadGraph,
    raster: &RasterGrid,
    centers: &CenterList,
    spec: &GridSpec,
    feature_name: &str,
    city_id: &str,
    options: &FusionOptions,
) -> Result<(RoadGraph, FusionReport), FusionError> {
    if centers.len() as u64 != spec.g {
        return Err(FusionError::SpecMismatch {
            expected: spec.g,
            got: centers.len(),
        });
    }
    let boxes = cell_boxes(centers, spec)?;
    let values: Vec<Option<f64>> = boxes
        .par_iter()
        .zip(centers.decoded.par_iter())
        .map(|(b, &c)| sample(raster, b, c, options.sampling).ok())
        .collect();

    let cells = values.len();
    let cells_nodata = values.iter().filter(|v| v.is_none()).count();
    if cells_nodata as f64 > options.nodata_threshold * cells as f64 {
        return Err(FusionError::RasterCoverage {
            failed: cells_nodata,
            cells,
            threshold: options.nodata_threshold,
        });
    }

    let owned = assign_edges(&graph, &boxes, &centers.decoded, centers.city_center.lat);
    let edges_total = graph.edge_count();
    let edges_assigned = check_conservation(edges_total, &owned)?;

    let mut stats = Stats::default();
    for (cell, value) in owned.iter().zip(&values) {
        let Some(v) = *value else { continue };
        let json = serde_json::Number::from_f64(v)
            .map(Value::Number)
            .ok_or(FusionError::NonFiniteValue(v))?;
        for &i in cell {
            graph.set_edge_attr_at(i, feature_name, &json);
            stats.push(v);
        }
    }

    let report = FusionReport {
        city_id: city_id.to_string(),
        feature: feature_name.to_string(),
        g: spec.g,
        edges_total,
        edges_assigned,
        edges_valued: stats.n,
        cells_empty: owned.iter().filter(|c| c.is_empty()).count(),
        cells_nodata,
        value_min: stats.min,
        value_max: stats.max,
        value_mean: (stats.n > 0).then(|| stats.sum / stats.n as f64),
    };
    Ok((graph, report))
}

#[derive(Default)]
struct Stats {
    n: usize,
    sum: f64,
    min: Option<f64>,
    max: Option<f64>,
}

impl Stats {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.min = Some(self.min.map_or(v, |m| m.min(v)));
        self.max = Some(self.max.map_or(v, |m| m.max(v)));
    }
}
