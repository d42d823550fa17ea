//! Field-boundary production toolkit.
//!
//! Converts tiled three-class segmentation probabilities into field polygons,
//! 500 m quality-indicator rasters, a trained per-cell confidence layer and
//! pixel-level validation reports. Every stage is a pure function over
//! in-memory rasters; file formats live next to the types they serialize.
//!
//! Module map:
//!
//! - [`raster`]: grids, rasters, nearest-neighbour resampling, polygon
//!   rasterization and Cloud-Optimized GeoTIFF I/O.
//! - [`composite`]: seasonal median compositing with SCL masking.
//! - [`stitch`]: patch planning, segmentation backends, Gaussian blending.
//! - [`vectorize`]: connected components, pixel-edge tracing, GeoParquet.
//! - [`indicators`]: per-cell entropy, density, consensus precision/recall.
//! - [`confidence`]: training sets, logistic regression, random forests,
//!   cross-validation and confidence products.
//! - [`evaluate`]: pixel metrics, hull recall and polygon shape statistics.

pub mod composite;
pub mod confidence;
pub mod error;
pub mod evaluate;
pub mod geom;
pub mod indicators;
pub mod raster;
pub mod stitch;
pub mod vectorize;

pub use error::{Error, Result};
