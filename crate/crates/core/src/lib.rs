//! Perfect-square rasterisation of square city maps and fusion of raster
//! features (pollutant concentrations and the like) onto road-network edges.
//!
//! The pipeline for one city is [`rasterizer::derive_spec`] →
//! [`rasterizer::rasterize`] → [`fusion::fuse`]; [`batch::run_batch`] repeats it
//! over a list of cities.

pub mod batch;
pub mod cli;
pub mod fusion;
pub mod geo;
pub mod graph;
pub mod output;
pub mod raster;
pub mod rasterizer;
pub mod verify;

pub use fusion::{fuse, FusionOptions, FusionReport};
pub use geo::{BBox, GeoPoint, LocalOffset};
pub use graph::{parse_geojson, RoadGraph};
pub use raster::{parse_ascii_grid, RasterGrid};
pub use rasterizer::{derive_spec, rasterize, rasterize_quantized, CenterList, GridSpec, Parity};
