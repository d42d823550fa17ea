//! Georeferenced regular grids and the rasters that live on them.
//!
//! Rasters are north-up: row 0 is the northern edge and rows increase
//! southward. Point-in-pixel tests use half-open intervals, so a point on a
//! shared edge belongs to the pixel to its south-east.

pub mod cog;
mod rasterize;
mod resample;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use rasterize::{rasterize_polygons, RasterizeMode};
pub use resample::{resample_nearest, Resampled};

pub const EPSG_WGS84: u32 = 4326;

/// Width of the global 500 m indicator grid.
pub const GLOBAL_WIDTH: usize = 86_400;
/// Height of the global 500 m indicator grid.
pub const GLOBAL_HEIGHT: usize = 34_560;
pub const GLOBAL_MIN_LAT: f64 = -60.0;
pub const GLOBAL_MAX_LAT: f64 = 84.0;

/// Side length of a 10 m pixel in degrees on the WorldCover grid.
pub const PIXEL_10M_DEG: f64 = 1.0 / 12_000.0;

/// Relative slack (in pixels) when deciding whether two grids line up.
const ALIGN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_lat: f64,
    pub max_lat: f64,
    pub width: usize,
    pub height: usize,
    /// EPSG code.
    pub crs: u32,
}

/// Half-open pixel rectangle `[row0, row0 + rows) x [col0, col0 + cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelWindow {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PixelWindow {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_range(&self) -> std::ops::Range<usize> {
        self.row0..self.row0 + self.rows
    }

    pub fn col_range(&self) -> std::ops::Range<usize> {
        self.col0..self.col0 + self.cols
    }
}

impl GridSpec {
    pub fn new(
        min_lon: f64,
        max_lon: f64,
        min_lat: f64,
        max_lat: f64,
        width: usize,
        height: usize,
        crs: u32,
    ) -> Result<Self> {
        let g = GridSpec {
            min_lon,
            max_lon,
            min_lat,
            max_lat,
            width,
            height,
            crs,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid with its north-west corner at `(west, north)` and square pixels.
    pub fn from_origin(west: f64, north: f64, pixel_deg: f64, width: usize, height: usize) -> Result<Self> {
        GridSpec::new(
            west,
            west + pixel_deg * width as f64,
            north - pixel_deg * height as f64,
            north,
            width,
            height,
            EPSG_WGS84,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid(format!("zero-sized grid {}x{}", self.width, self.height)));
        }
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.pixel_width()) || !ok(self.pixel_height()) {
            return Err(Error::InvalidGrid(format!(
                "non-positive pixel size ({}, {})",
                self.pixel_width(),
                self.pixel_height()
            )));
        }
        Ok(())
    }

    pub fn pixel_width(&self) -> f64 {
        (self.max_lon - self.min_lon) / self.width as f64
    }

    pub fn pixel_height(&self) -> f64 {
        (self.max_lat - self.min_lat) / self.height as f64
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn full_window(&self) -> PixelWindow {
        PixelWindow {
            row0: 0,
            col0: 0,
            rows: self.height,
            cols: self.width,
        }
    }

    /// Fractional pixel coordinates `(row, col)` of a point.
    pub fn pixel_coords(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (self.max_lat - lat) / self.pixel_height(),
            (lon - self.min_lon) / self.pixel_width(),
        )
    }

    /// Pixel containing the point, or `None` outside the grid.
    pub fn pixel_at(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        let (r, c) = self.pixel_coords(lon, lat);
        let (r, c) = (r.floor(), c.floor());
        if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.min_lon + (col as f64 + 0.5) * self.pixel_width(),
            self.max_lat - (row as f64 + 0.5) * self.pixel_height(),
        )
    }

    /// Geographic bounds `(west, south, east, north)` of one pixel.
    pub fn pixel_bounds(&self, row: usize, col: usize) -> (f64, f64, f64, f64) {
        let (pw, ph) = (self.pixel_width(), self.pixel_height());
        (
            self.min_lon + col as f64 * pw,
            self.max_lat - (row + 1) as f64 * ph,
            self.min_lon + (col + 1) as f64 * pw,
            self.max_lat - row as f64 * ph,
        )
    }

    /// The sub-grid covering a pixel window of this grid.
    pub fn window_grid(&self, w: PixelWindow) -> GridSpec {
        let (pw, ph) = (self.pixel_width(), self.pixel_height());
        GridSpec {
            min_lon: self.min_lon + w.col0 as f64 * pw,
            max_lon: self.min_lon + (w.col0 + w.cols) as f64 * pw,
            min_lat: self.max_lat - (w.row0 + w.rows) as f64 * ph,
            max_lat: self.max_lat - w.row0 as f64 * ph,
            width: w.cols,
            height: w.rows,
            crs: self.crs,
        }
    }

    /// Pixels of `self` whose area intersects the extent of `other`,
    /// clipped to this grid. Edges within a millionth of a pixel snap.
    pub fn covering_window(&self, other: &GridSpec) -> PixelWindow {
        let (r0, c0) = self.pixel_coords(other.min_lon, other.max_lat);
        let (r1, c1) = self.pixel_coords(other.max_lon, other.min_lat);
        let lo = |v: f64, n: usize| ((v + ALIGN_TOL).floor().max(0.0) as usize).min(n);
        let hi = |v: f64, n: usize| ((v - ALIGN_TOL).ceil().max(0.0) as usize).min(n);
        let (row0, row1) = (lo(r0, self.height), hi(r1, self.height));
        let (col0, col1) = (lo(c0, self.width), hi(c1, self.width));
        PixelWindow {
            row0,
            col0,
            rows: row1.saturating_sub(row0),
            cols: col1.saturating_sub(col0),
        }
    }

    /// True when every pixel edge of `coarse` falls on a pixel edge of `self`.
    pub fn is_aligned_with(&self, coarse: &GridSpec) -> bool {
        let fx = coarse.pixel_width() / self.pixel_width();
        let fy = coarse.pixel_height() / self.pixel_height();
        let near_int = |v: f64| (v - v.round()).abs() < ALIGN_TOL * v.abs().max(1.0);
        let (r, c) = self.pixel_coords(coarse.min_lon, coarse.max_lat);
        self.crs == coarse.crs && near_int(fx) && near_int(fy) && near_int(r) && near_int(c)
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        let tol = ALIGN_TOL * self.pixel_width().min(self.pixel_height());
        self.width == other.width
            && self.height == other.height
            && self.crs == other.crs
            && (self.min_lon - other.min_lon).abs() < tol
            && (self.max_lon - other.max_lon).abs() < tol
            && (self.min_lat - other.min_lat).abs() < tol
            && (self.max_lat - other.max_lat).abs() < tol
    }

    pub fn ensure_same(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{what}: {self:?} vs {other:?}")))
        }
    }
}

/// The fixed 500 m global indicator grid in EPSG:4326.
pub fn make_global_grid() -> GridSpec {
    GridSpec {
        min_lon: -180.0,
        max_lon: 180.0,
        min_lat: GLOBAL_MIN_LAT,
        max_lat: GLOBAL_MAX_LAT,
        width: GLOBAL_WIDTH,
        height: GLOBAL_HEIGHT,
        crs: EPSG_WGS84,
    }
}

/// Window of `fine` covered by `cell` of `coarse`, clipped to `fine`.
/// Exactly `ratio x ratio` pixels when the grids are aligned and the cell
/// lies fully inside `fine`.
pub fn cell_window_on(fine: &GridSpec, coarse: &GridSpec, cell: (usize, usize)) -> Result<PixelWindow> {
    let (row, col) = cell;
    if row >= coarse.height || col >= coarse.width {
        return Err(Error::CellOutOfBounds {
            row,
            col,
            height: coarse.height,
            width: coarse.width,
        });
    }
    let (west, south, east, north) = coarse.pixel_bounds(row, col);
    let (r0, c0) = fine.pixel_coords(west, north);
    let (r1, c1) = fine.pixel_coords(east, south);
    let clip = |v: f64, n: usize| (v.round().max(0.0) as usize).min(n);
    let (row0, row1) = (clip(r0, fine.height), clip(r1, fine.height));
    let (col0, col1) = (clip(c0, fine.width), clip(c1, fine.width));
    Ok(PixelWindow {
        row0,
        col0,
        rows: row1.saturating_sub(row0),
        cols: col1.saturating_sub(col0),
    })
}

/// [`cell_window_on`] against the global 500 m grid.
pub fn cell_window(grid_10m: &GridSpec, cell: (usize, usize)) -> Result<PixelWindow> {
    cell_window_on(grid_10m, &make_global_grid(), cell)
}

/// The part of the global 500 m grid that covers `fine`, plus the global
/// `(row, col)` of its first cell.
pub fn global_cells_covering(fine: &GridSpec) -> (GridSpec, (usize, usize)) {
    let global = make_global_grid();
    let w = global.covering_window(fine);
    (global.window_grid(w), (w.row0, w.col0))
}

/// Pixel value types with a per-type notion of "missing".
pub trait Sample: Copy + PartialEq + Debug + Send + Sync + 'static {
    fn is_missing(self, nodata: Option<Self>) -> bool {
        nodata.is_some_and(|n| n == self)
    }
}

impl Sample for u8 {}
impl Sample for u16 {}
impl Sample for u32 {}
impl Sample for i16 {}
impl Sample for i32 {}

impl Sample for f32 {
    fn is_missing(self, nodata: Option<Self>) -> bool {
        self.is_nan() || nodata.is_some_and(|n| n == self)
    }
}

impl Sample for f64 {
    fn is_missing(self, nodata: Option<Self>) -> bool {
        self.is_nan() || nodata.is_some_and(|n| n == self)
    }
}

/// Probability triples: missing when any component is NaN.
impl Sample for [f64; 3] {
    fn is_missing(self, _nodata: Option<Self>) -> bool {
        self.iter().any(|v| v.is_nan())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    pub grid: GridSpec,
    /// Row-major, `grid.width * grid.height` values.
    pub data: Vec<T>,
    pub nodata: Option<T>,
}

/// Per-pixel (background, field, boundary) probabilities.
pub type ProbabilityRaster = Raster<[f64; 3]>;

pub const NODATA_TRIPLE: [f64; 3] = [f64::NAN; 3];

impl<T: Sample> Raster<T> {
    pub fn new(grid: GridSpec, data: Vec<T>, nodata: Option<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "raster has {} values for a {}x{} grid",
                data.len(),
                grid.height,
                grid.width
            )));
        }
        Ok(Raster { grid, data, nodata })
    }

    pub fn filled(grid: GridSpec, value: T, nodata: Option<T>) -> Self {
        Raster {
            data: vec![value; grid.len()],
            grid,
            nodata,
        }
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.grid.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        let w = self.grid.width;
        self.data[row * w + col] = v;
    }

    #[inline]
    pub fn is_nodata(&self, v: T) -> bool {
        v.is_missing(self.nodata)
    }

    /// Value at a geographic point, `None` outside the grid or on nodata.
    pub fn sample(&self, lon: f64, lat: f64) -> Option<T> {
        let (r, c) = self.grid.pixel_at(lon, lat)?;
        let v = self.get(r, c);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn map<U: Sample>(&self, nodata: Option<U>, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
            nodata,
        }
    }

    pub fn crop(&self, w: PixelWindow) -> Raster<T> {
        let mut data = Vec::with_capacity(w.len());
        for r in w.row_range() {
            let start = r * self.grid.width + w.col0;
            data.extend_from_slice(&self.data[start..start + w.cols]);
        }
        Raster {
            grid: self.grid.window_grid(w),
            data,
            nodata: self.nodata,
        }
    }
}

/// Band-sequential multi-band raster, used for imagery and file I/O.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRaster<T> {
    pub grid: GridSpec,
    pub bands: Vec<Vec<T>>,
    pub nodata: Option<T>,
}

impl<T: Sample> MultiRaster<T> {
    pub fn new(grid: GridSpec, bands: Vec<Vec<T>>, nodata: Option<T>) -> Result<Self> {
        if bands.is_empty() || bands.iter().any(|b| b.len() != grid.len()) {
            return Err(Error::InvalidInput(format!(
                "expected non-empty bands of {} values",
                grid.len()
            )));
        }
        Ok(MultiRaster { grid, bands, nodata })
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn band(&self, i: usize) -> Raster<T> {
        Raster {
            grid: self.grid,
            data: self.bands[i].clone(),
            nodata: self.nodata,
        }
    }

    pub fn from_single(r: Raster<T>) -> Self {
        MultiRaster {
            grid: r.grid,
            bands: vec![r.data],
            nodata: r.nodata,
        }
    }
}

impl ProbabilityRaster {
    pub fn to_bands(&self) -> MultiRaster<f32> {
        let bands = (0..3)
            .map(|k| self.data.iter().map(|p| p[k] as f32).collect())
            .collect();
        MultiRaster {
            grid: self.grid,
            bands,
            nodata: Some(f32::NAN),
        }
    }

    pub fn from_bands(m: &MultiRaster<f32>) -> Result<Self> {
        if m.band_count() != 3 {
            return Err(Error::InvalidInput(format!(
                "probability raster needs 3 bands, got {}",
                m.band_count()
            )));
        }
        let data = (0..m.grid.len())
            .map(|i| {
                let p = [m.bands[0][i], m.bands[1][i], m.bands[2][i]];
                if p.iter().any(|v| v.is_missing(m.nodata)) {
                    NODATA_TRIPLE
                } else {
                    p.map(f64::from)
                }
            })
            .collect();
        Raster::new(m.grid, data, None)
    }
}
