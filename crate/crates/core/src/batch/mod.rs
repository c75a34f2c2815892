//! Multi-city runs: rasterise and fuse every city of a list.
//!
//! Each city is processed independently, so a failure in one city is recorded
//! in its outcome and never affects the others. Outcomes come back in input
//! order whatever the worker count.

pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{fuse, FusionError, FusionOptions, FusionReport};
use crate::geo::GeoPoint;
use crate::graph::{parse_geojson, GraphError};
use crate::output::write_atomic;
use crate::raster::{parse_ascii_grid, RasterError, RasterGrid};
use crate::rasterizer::{derive_spec, rasterize, RasterizeError};

pub use synthetic::{gen_synthetic, synthetic_city, SyntheticCity};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BatchError {
    #[error("city list: {0}")]
    CityList(String),
    #[error(transparent)]
    Rasterize(#[from] RasterizeError),
    #[error("graph {path}: {source}")]
    Graph { path: String, source: GraphError },
    #[error("raster {path}: {source}")]
    Raster { path: String, source: RasterError },
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("i/o: {0}")]
    Io(String),
    #[error("synthetic city: {0}")]
    Synthetic(String),
}

impl BatchError {
    /// Short machine-readable category used in report records.
    pub fn kind(&self) -> &'static str {
        match self {
            BatchError::CityList(_) => "city_list",
            BatchError::Rasterize(RasterizeError::CountMismatch { .. }) => "count_mismatch",
            BatchError::Rasterize(_) => "invalid_size",
            BatchError::Graph { .. } | BatchError::Raster { .. } => "parse",
            BatchError::Fusion(FusionError::ConservationViolation { .. }) => "conservation",
            BatchError::Fusion(FusionError::RasterCoverage { .. }) => "coverage",
            BatchError::Fusion(_) => "fusion",
            BatchError::Io(_) => "io",
            BatchError::Synthetic(_) => "synthetic",
        }
    }
}

/// One city of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CityRecord {
    pub city_id: String,
    pub center: GeoPoint,
    pub a_m: f64,
    pub graph_path: PathBuf,
    /// `(feature name, raster path)` pairs, fused in order.
    pub features: Vec<(String, PathBuf)>,
}

#[derive(Debug, Deserialize)]
struct CityRow {
    city_id: String,
    lat: f64,
    lon: f64,
    size_m: f64,
    graph_path: PathBuf,
    #[serde(default)]
    raster_path: Option<PathBuf>,
}

/// Reads a city list CSV with header `city_id,lat,lon,size_m,graph_path` and an
/// optional `raster_path` column. Paths in the CSV are resolved against its
/// directory; `features` paths are used as given. A per-row raster overrides
/// the shared raster of the first feature.
pub fn read_city_list(
    path: &Path,
    features: &[(String, PathBuf)],
) -> Result<Vec<CityRecord>, BatchError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let file =
        File::open(path).map_err(|e| BatchError::CityList(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let resolve = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };

    let mut seen = BTreeSet::new();
    let mut cities = Vec::new();
    for (i, row) in reader.deserialize::<CityRow>().enumerate() {
        let row = row.map_err(|e| BatchError::CityList(format!("row {}: {e}", i + 1)))?;
        if !seen.insert(row.city_id.clone()) {
            return Err(BatchError::CityList(format!(
                "duplicate city_id `{}`",
                row.city_id
            )));
        }
        let center = GeoPoint::new(row.lat, row.lon)
            .map_err(|e| BatchError::CityList(format!("city `{}`: {e}", row.city_id)))?;
        let mut feats = features.to_vec();
        match (row.raster_path, feats.first_mut()) {
            (Some(p), Some(first)) => first.1 = resolve(p),
            (Some(p), None) => feats.push(("value".to_string(), resolve(p))),
            (None, _) => {}
        }
        cities.push(CityRecord {
            city_id: row.city_id,
            center,
            a_m: row.size_m,
            graph_path: resolve(row.graph_path),
            features: feats,
        });
    }
    Ok(cities)
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub r_m: f64,
    pub parallelism: usize,
    pub fusion: FusionOptions,
    /// Where fused graphs are written as `<city_id>.geojson`; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl BatchConfig {
    pub fn new(r_m: f64) -> Self {
        BatchConfig {
            r_m,
            parallelism: 1,
            fusion: FusionOptions::default(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CityResult {
    Ok { reports: Vec<FusionReport> },
    Error { kind: String, message: String },
}

/// Result of one city; serialised as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CityOutcome {
    pub city_id: String,
    #[serde(flatten)]
    pub result: CityResult,
}

impl CityOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self.result, CityResult::Ok { .. })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("outcome serialises")
    }
}

pub fn write_json_lines<W: Write>(outcomes: &[CityOutcome], mut out: W) -> std::io::Result<()> {
    for o in outcomes {
        writeln!(out, "{}", o.to_json_line())?;
    }
    Ok(())
}

type RasterCache = BTreeMap<PathBuf, Result<Arc<RasterGrid>, BatchError>>;

fn load_raster(path: &Path) -> Result<Arc<RasterGrid>, BatchError> {
    let err = |source| BatchError::Raster {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(|e| err(RasterError::Io(e.to_string())))?;
    parse_ascii_grid(BufReader::new(file))
        .map(Arc::new)
        .map_err(err)
}

fn process_city(
    city: &CityRecord,
    config: &BatchConfig,
    rasters: &RasterCache,
) -> Result<Vec<FusionReport>, BatchError> {
    let spec = derive_spec(city.a_m, config.r_m)?;
    let centers = rasterize(city.center, &spec)?;

    let graph_err = |source| BatchError::Graph {
        path: city.graph_path.display().to_string(),
        source,
    };
    let file =
        File::open(&city.graph_path).map_err(|e| graph_err(GraphError::Io(e.to_string())))?;
    let mut graph = parse_geojson(BufReader::new(file)).map_err(graph_err)?;

    let mut reports = Vec::with_capacity(city.features.len());
    for (feature, path) in &city.features {
        let raster = rasters
            .get(path)
            .cloned()
            .unwrap_or_else(|| load_raster(path))?;
        let (fused, report) = fuse(
            graph,
            &raster,
            &centers,
            &spec,
            feature,
            &city.city_id,
            &config.fusion,
        )?;
        graph = fused;
        reports.push(report);
    }

    if let Some(dir) = &config.out_dir {
        let path = dir.join(format!("{}.geojson", city.city_id));
        write_atomic(&path, graph.to_geojson_string().as_bytes())
            .map_err(|e| BatchError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(reports)
}

/// Runs every city through derive_spec → rasterize → fuse.
pub fn run_batch(cities: &[CityRecord], config: &BatchConfig) -> Vec<CityOutcome> {
    let paths: BTreeSet<&PathBuf> = cities
        .iter()
        .flat_map(|c| c.features.iter().map(|(_, p)| p))
        .collect();
    let rasters: RasterCache = paths
        .into_iter()
        .map(|p| (p.clone(), load_raster(p)))
        .collect();

    let run = |city: &CityRecord| CityOutcome {
        city_id: city.city_id.clone(),
        result: match process_city(city, config, &rasters) {
            Ok(reports) => CityResult::Ok { reports },
            Err(e) => CityResult::Error {
                kind: e.kind().to_string(),
                message: e.to_string(),
            },
        },
    };

    if config.parallelism <= 1 {
        return cities.iter().map(run).collect();
    }
    match rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
    {
        Ok(pool) => pool.install(|| cities.par_iter().map(run).collect()),
        Err(_) => cities.iter().map(run).collect(),
    }
}
