//! Per-cell quality indicators on the 500 m grid.
//!
//! Each 500 m cell aggregates the roughly 50x50 block of 10 m pixels under
//! it: mean Shannon entropy (natural log) of field and boundary pixels,
//! class counts, precision/recall of the field mask against cropland
//! consensus at agreement thresholds 2 and 3, and the mean consensus count.
//! Pixels whose class is nodata take no part in any statistic.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::cog::write_raster;
use crate::raster::{cell_window_on, global_cells_covering, make_global_grid, GridSpec, PixelWindow, ProbabilityRaster, Raster, Sample};
use crate::stitch::{CLASS_BOUNDARY, CLASS_FIELD};

pub const CONSENSUS_NODATA: u8 = 255;

/// Which pixel values of a cropland product count as cropland.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CroplandRule {
    /// Any strictly positive value (fractional-cover products).
    Positive,
    Classes(Vec<i64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Global,
    Africa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CroplandLayerSpec {
    pub name: String,
    pub resolution_m: f64,
    pub rule: CroplandRule,
    pub coverage: Coverage,
}

impl CroplandLayerSpec {
    fn new(name: &str, resolution_m: f64, rule: CroplandRule, coverage: Coverage) -> Self {
        if let CroplandRule::Classes(c) = &rule {
            assert!(!c.is_empty(), "cropland class list must not be empty");
        }
        CroplandLayerSpec {
            name: name.into(),
            resolution_m,
            rule,
            coverage,
        }
    }

    pub fn is_cropland(&self, v: f64) -> bool {
        match &self.rule {
            CroplandRule::Positive => v > 0.0,
            CroplandRule::Classes(c) => v.fract() == 0.0 && c.contains(&(v as i64)),
        }
    }
}

/// The eight cropland products merged into the consensus layer.
pub fn builtin_cropland_layers() -> Vec<CroplandLayerSpec> {
    use CroplandRule::*;
    use Coverage::*;
    vec![
        CroplandLayerSpec::new("asap", 500.0, Positive, Global),
        CroplandLayerSpec::new("globcover", 300.0, Classes(vec![11, 14, 20, 30]), Global),
        CroplandLayerSpec::new("cci", 300.0, Classes(vec![10, 11, 12, 20, 30, 40]), Global),
        CroplandLayerSpec::new("copernicus", 100.0, Classes(vec![40]), Global),
        CroplandLayerSpec::new("glad", 30.0, Classes(vec![1]), Global),
        CroplandLayerSpec::new("esri", 10.0, Classes(vec![5]), Global),
        CroplandLayerSpec::new("deafrica", 10.0, Classes(vec![1]), Africa),
        CroplandLayerSpec::new("worldcereal", 10.0, Classes(vec![100]), Global),
    ]
}

/// 1 for cropland, 0 otherwise, [`CONSENSUS_NODATA`] where the layer has no data.
pub fn binarize_cropland<T: Sample + Into<f64>>(layer: &Raster<T>, spec: &CroplandLayerSpec) -> Raster<u8> {
    layer.map(Some(CONSENSUS_NODATA), |v| {
        if layer.is_nodata(v) {
            CONSENSUS_NODATA
        } else {
            u8::from(spec.is_cropland(v.into()))
        }
    })
}

/// Per-pixel number of layers flagging cropland. Nodata contributes 0, so
/// a layer without coverage somewhere simply does not vote there.
pub fn consensus_count(binaries: &[Raster<u8>]) -> Result<Raster<u8>> {
    let first = binaries
        .first()
        .ok_or_else(|| Error::InvalidInput("consensus needs at least one layer".into()))?;
    for (i, b) in binaries.iter().enumerate().skip(1) {
        first.grid.ensure_same(&b.grid, &format!("consensus layer {i}"))?;
    }
    let mut sum = vec![0u8; first.grid.len()];
    for b in binaries {
        for (s, &v) in sum.iter_mut().zip(&b.data) {
            *s += u8::from(v == 1);
        }
    }
    Raster::new(first.grid, sum, None)
}

/// Arithmetic mean of the consensus count over each cell of `coarse`.
/// Cells with no overlapping fine pixels are NaN.
pub fn consensus_cell_mean(count: &Raster<u8>, coarse: &GridSpec) -> Result<Raster<f64>> {
    let mut out = Vec::with_capacity(coarse.len());
    for r in 0..coarse.height {
        for c in 0..coarse.width {
            let w = cell_window_on(&count.grid, coarse, (r, c))?;
            let (mut s, n) = (0u64, w.len());
            for_each_pixel(count.width(), w, |i| s += u64::from(count.data[i]));
            out.push(if n == 0 { f64::NAN } else { s as f64 / n as f64 });
        }
    }
    Raster::new(*coarse, out, Some(f64::NAN))
}

fn for_each_pixel(width: usize, w: PixelWindow, mut f: impl FnMut(usize)) {
    for r in w.row_range() {
        for c in w.col_range() {
            f(r * width + c);
        }
    }
}

/// Shannon entropy in nats with 0·ln 0 = 0.
pub fn entropy(p: [f64; 3]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Mean entropy of field pixels and of boundary pixels in a window;
/// `None` for a class with no pixels there.
pub fn cell_entropy(probs: &ProbabilityRaster, classes: &Raster<u8>, w: PixelWindow) -> (Option<f64>, Option<f64>) {
    let mut acc = [(0.0, 0usize); 2];
    for_each_pixel(classes.width(), w, |i| {
        let k = match classes.data[i] {
            CLASS_FIELD => 0,
            CLASS_BOUNDARY => 1,
            _ => return,
        };
        acc[k].0 += entropy(probs.data[i]);
        acc[k].1 += 1;
    });
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    (mean(acc[0]), mean(acc[1]))
}

/// Field and boundary pixel counts in a window.
pub fn cell_density(classes: &Raster<u8>, w: PixelWindow) -> (u32, u32) {
    let (mut f, mut b) = (0, 0);
    for_each_pixel(classes.width(), w, |i| match classes.data[i] {
        CLASS_FIELD => f += 1,
        CLASS_BOUNDARY => b += 1,
        _ => {}
    });
    (f, b)
}

/// `P_k = |F ∩ C_k| / |F|` and `R_k = |F ∩ C_k| / |C_k|` over the window,
/// where F is field pixels and C_k pixels with consensus of at least `k`.
/// Pixels with nodata class are outside both sets.
pub fn cell_precision_recall(
    classes: &Raster<u8>,
    consensus: &Raster<u8>,
    k: u8,
    w: PixelWindow,
) -> (Option<f64>, Option<f64>) {
    let (mut f, mut ck, mut both) = (0usize, 0usize, 0usize);
    for_each_pixel(classes.width(), w, |i| {
        let cls = classes.data[i];
        if classes.is_nodata(cls) {
            return;
        }
        let in_f = cls == CLASS_FIELD;
        let in_c = consensus.data[i] >= k;
        f += usize::from(in_f);
        ck += usize::from(in_c);
        both += usize::from(in_f && in_c);
    });
    let ratio = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
    (ratio(both, f), ratio(both, ck))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellIndicatorRecord {
    /// Global 500 m grid row and column.
    pub row: usize,
    pub col: usize,
    /// 10 m pixels in the cell window with a valid class.
    pub valid_pixels: u32,
    pub window_pixels: u32,
    pub entropy_field: Option<f64>,
    pub entropy_boundary: Option<f64>,
    pub count_field: u32,
    pub count_boundary: u32,
    pub precision_k2: Option<f64>,
    pub recall_k2: Option<f64>,
    pub precision_k3: Option<f64>,
    pub recall_k3: Option<f64>,
    /// `None` when consensus layers were not supplied.
    pub consensus_mean: Option<f64>,
    pub field_boundary_ratio: f64,
    pub field_density: f64,
    pub entropy_ratio: Option<f64>,
}

impl CellIndicatorRecord {
    pub fn has_consensus(&self) -> bool {
        self.consensus_mean.is_some()
    }

    /// Whether the model predicted anything in the cell.
    pub fn is_active(&self) -> bool {
        self.count_field + self.count_boundary > 0
    }

    /// A cell with no pixels under the tile.
    pub fn empty(row: usize, col: usize) -> Self {
        CellIndicatorRecord {
            row,
            col,
            valid_pixels: 0,
            window_pixels: 0,
            entropy_field: None,
            entropy_boundary: None,
            count_field: 0,
            count_boundary: 0,
            precision_k2: None,
            recall_k2: None,
            precision_k3: None,
            recall_k3: None,
            consensus_mean: None,
            field_boundary_ratio: 0.0,
            field_density: 0.0,
            entropy_ratio: None,
        }
    }

    fn derive(&mut self) {
        self.field_boundary_ratio = f64::from(self.count_field) / f64::from(self.count_boundary.max(1));
        self.field_density = if self.window_pixels == 0 {
            0.0
        } else {
            f64::from(self.count_field) / f64::from(self.window_pixels)
        };
        self.entropy_ratio = match (self.entropy_field, self.entropy_boundary) {
            (Some(f), Some(b)) if b != 0.0 => Some(f / b),
            _ => None,
        };
    }
}

/// Indicators for one cell window.
pub fn cell_record(
    probs: &ProbabilityRaster,
    classes: &Raster<u8>,
    consensus: Option<&Raster<u8>>,
    cell: (usize, usize),
    w: PixelWindow,
) -> CellIndicatorRecord {
    let (ef, eb) = cell_entropy(probs, classes, w);
    let (cf, cb) = cell_density(classes, w);
    let mut valid = 0;
    for_each_pixel(classes.width(), w, |i| valid += u32::from(!classes.is_nodata(classes.data[i])));
    let (mut p2, mut r2, mut p3, mut r3, mut cm) = (None, None, None, None, None);
    if let Some(cons) = consensus {
        (p2, r2) = cell_precision_recall(classes, cons, 2, w);
        (p3, r3) = cell_precision_recall(classes, cons, 3, w);
        let mut s = 0u64;
        for_each_pixel(cons.width(), w, |i| s += u64::from(cons.data[i]));
        cm = (!w.is_empty()).then(|| s as f64 / w.len() as f64);
    }
    let mut rec = CellIndicatorRecord {
        row: cell.0,
        col: cell.1,
        valid_pixels: valid,
        window_pixels: w.len() as u32,
        entropy_field: ef,
        entropy_boundary: eb,
        count_field: cf,
        count_boundary: cb,
        precision_k2: p2,
        recall_k2: r2,
        precision_k3: p3,
        recall_k3: r3,
        consensus_mean: cm,
        field_boundary_ratio: 0.0,
        field_density: 0.0,
        entropy_ratio: None,
    };
    rec.derive();
    rec
}

/// Indicator records for every 500 m cell overlapping a 10 m tile.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorTable {
    /// Subset of the global 500 m grid covering the tile.
    pub grid: GridSpec,
    /// Global (row, col) of `grid`'s first cell.
    pub origin: (usize, usize),
    /// Row-major over `grid`.
    pub records: Vec<CellIndicatorRecord>,
}

pub fn compute_indicators(
    probs: &ProbabilityRaster,
    classes: &Raster<u8>,
    consensus: Option<&Raster<u8>>,
) -> Result<IndicatorTable> {
    probs.grid.ensure_same(&classes.grid, "probabilities vs classes")?;
    if let Some(c) = consensus {
        classes.grid.ensure_same(&c.grid, "classes vs consensus")?;
    }
    let (grid, origin) = global_cells_covering(&classes.grid);
    let records = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i / grid.width, i % grid.width);
            let w = cell_window_on(&classes.grid, &grid, (r, c))?;
            Ok(cell_record(probs, classes, consensus, (origin.0 + r, origin.1 + c), w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IndicatorTable { grid, origin, records })
}

impl IndicatorTable {
    /// Rebuild a table from cell records, e.g. a cell table read back from
    /// disk. The grid is the records' bounding box on the global grid;
    /// cells without a record get an empty (inactive) one.
    pub fn from_records(mut records: Vec<CellIndicatorRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("no cell records".into()));
        }
        records.sort_by_key(|r| (r.row, r.col));
        if let Some(w) = records.windows(2).find(|w| (w[0].row, w[0].col) == (w[1].row, w[1].col)) {
            return Err(Error::InvalidInput(format!("duplicate record for cell ({}, {})", w[0].row, w[0].col)));
        }
        let (r0, r1) = (records[0].row, records[records.len() - 1].row);
        let c0 = records.iter().map(|r| r.col).min().expect("non-empty");
        let c1 = records.iter().map(|r| r.col).max().expect("non-empty");
        let global = make_global_grid();
        if r1 >= global.height || c1 >= global.width {
            return Err(Error::CellOutOfBounds { row: r1, col: c1, height: global.height, width: global.width });
        }
        let w = PixelWindow { row0: r0, col0: c0, rows: r1 - r0 + 1, cols: c1 - c0 + 1 };
        let mut it = records.into_iter().peekable();
        let mut out = Vec::with_capacity(w.len());
        for row in w.row_range() {
            for col in w.col_range() {
                match it.next_if(|r| (r.row, r.col) == (row, col)) {
                    Some(r) => out.push(r),
                    None => out.push(CellIndicatorRecord::empty(row, col)),
                }
            }
        }
        Ok(IndicatorTable { grid: global.window_grid(w), origin: (r0, c0), records: out })
    }
}

/// Layer names written by [`write_indicator_rasters`], in order.
pub const INDICATOR_LAYERS: [&str; 14] = [
    "entropy_field",
    "entropy_boundary",
    "count_field",
    "count_boundary",
    "precision_k2",
    "recall_k2",
    "precision_k3",
    "recall_k3",
    "consensus_mean",
    "field_boundary_ratio",
    "field_density",
    "entropy_ratio",
    "valid_pixels",
    "window_pixels",
];

fn layer_value(r: &CellIndicatorRecord, name: &str) -> Option<f64> {
    match name {
        "entropy_field" => r.entropy_field,
        "entropy_boundary" => r.entropy_boundary,
        "count_field" => Some(f64::from(r.count_field)),
        "count_boundary" => Some(f64::from(r.count_boundary)),
        "precision_k2" => r.precision_k2,
        "recall_k2" => r.recall_k2,
        "precision_k3" => r.precision_k3,
        "recall_k3" => r.recall_k3,
        "consensus_mean" => r.consensus_mean,
        "field_boundary_ratio" => Some(r.field_boundary_ratio),
        "field_density" => Some(r.field_density),
        "entropy_ratio" => r.entropy_ratio,
        "valid_pixels" => Some(f64::from(r.valid_pixels)),
        "window_pixels" => Some(f64::from(r.window_pixels)),
        _ => unreachable!("unknown indicator layer {name}"),
    }
}

/// One float32 COG per indicator (`<dir>/<name>.tif`, NaN nodata) on the
/// table's 500 m grid. Consensus-derived layers are skipped when absent.
pub fn write_indicator_rasters(t: &IndicatorTable, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let has_consensus = t.records.iter().any(CellIndicatorRecord::has_consensus);
    let mut paths = Vec::new();
    for name in INDICATOR_LAYERS {
        let consensus_layer = name.starts_with("precision") || name.starts_with("recall") || name == "consensus_mean";
        if consensus_layer && !has_consensus {
            continue;
        }
        let data = t
            .records
            .iter()
            .map(|r| layer_value(r, name).map_or(f32::NAN, |v| v as f32))
            .collect();
        let path = dir.join(format!("{name}.tif"));
        write_raster(&path, &Raster::new(t.grid, data, Some(f32::NAN))?)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Cell table as CSV; nodata fields are empty.
pub fn write_cell_table(records: &[CellIndicatorRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse("cell table", path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::parse("cell table", path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cell_table(path: impl AsRef<Path>) -> Result<Vec<CellIndicatorRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse("cell table", path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::parse("cell table", path, e)))
        .collect()
}

/// Confidence-model feature configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    ModelOnly,
    ModelConsensus,
    ModelPr,
    All,
}

const MODEL_FEATURES: [&str; 7] = [
    "entropy_field",
    "entropy_boundary",
    "count_field",
    "count_boundary",
    "field_boundary_ratio",
    "field_density",
    "entropy_ratio",
];
const PR_FEATURES: [&str; 4] = ["precision_k2", "recall_k2", "precision_k3", "recall_k3"];

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [FeatureSet::ModelOnly, FeatureSet::ModelConsensus, FeatureSet::ModelPr, FeatureSet::All];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::ModelOnly => "model_only",
            FeatureSet::ModelConsensus => "model_consensus",
            FeatureSet::ModelPr => "model_pr",
            FeatureSet::All => "all",
        }
    }

    pub fn uses_consensus(self) -> bool {
        self != FeatureSet::ModelOnly
    }

    /// Feature names in vector order: the seven model features, then
    /// P/R at k=2 and k=3 if included, then the consensus mean if included.
    pub fn names(self) -> Vec<&'static str> {
        let mut v = MODEL_FEATURES.to_vec();
        if matches!(self, FeatureSet::ModelPr | FeatureSet::All) {
            v.extend(PR_FEATURES);
        }
        if matches!(self, FeatureSet::ModelConsensus | FeatureSet::All) {
            v.push("consensus_mean");
        }
        v
    }

    pub fn len(self) -> usize {
        self.names().len()
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown feature set '{s}'")))
    }
}

/// Feature vector for one cell with nodata imputed as 0.
pub fn derive_features(rec: &CellIndicatorRecord, set: FeatureSet) -> Result<Vec<f64>> {
    if set.uses_consensus() && !rec.has_consensus() {
        return Err(Error::MissingConsensus(set.as_str()));
    }
    Ok(set
        .names()
        .into_iter()
        .map(|n| layer_value(rec, n).unwrap_or(0.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::PIXEL_10M_DEG;

    fn grid(w: usize, h: usize) -> GridSpec {
        GridSpec::from_origin(28.0, -14.0, PIXEL_10M_DEG, w, h).unwrap()
    }

    fn win(rows: usize, cols: usize) -> PixelWindow {
        PixelWindow { row0: 0, col0: 0, rows, cols }
    }

    #[test]
    fn table_m1_rules() {
        let layers = builtin_cropland_layers();
        assert_eq!(layers.len(), 8);
        let by = |n: &str| layers.iter().find(|l| l.name == n).unwrap().clone();
        assert!(by("copernicus").is_cropland(40.0));
        assert!(!by("copernicus").is_cropland(50.0));
        assert!(!by("asap").is_cropland(0.0));
        assert!(by("asap").is_cropland(3.0));
        assert!(by("cci").is_cropland(12.0));
        assert!(!by("globcover").is_cropland(12.0));
        assert_eq!(by("deafrica").coverage, Coverage::Africa);
        assert_eq!(layers.iter().filter(|l| l.coverage == Coverage::Africa).count(), 1);
    }

    #[test]
    fn binarize_keeps_nodata() {
        let spec = &builtin_cropland_layers()[3];
        let r = Raster::new(grid(3, 1), vec![40i32, 50, -9999], Some(-9999)).unwrap();
        assert_eq!(binarize_cropland(&r, spec).data, vec![1, 0, CONSENSUS_NODATA]);
    }

    #[test]
    fn consensus_sums_votes() {
        let g = grid(2, 1);
        let mk = |a, b| Raster::new(g, vec![a, b], Some(CONSENSUS_NODATA)).unwrap();
        let layers = vec![mk(1, 0), mk(1, CONSENSUS_NODATA), mk(1, 1), mk(0, 0)];
        assert_eq!(consensus_count(&layers).unwrap().data, vec![3, 1]);
        assert!(consensus_count(&[]).is_err());
    }

    #[test]
    fn entropy_examples() {
        let third = 1.0 / 3.0;
        assert!((entropy([third; 3]) - 3f64.ln()).abs() < 1e-12);
        assert_eq!(entropy([0.0, 1.0, 0.0]), 0.0);
        let g = grid(2, 1);
        let probs = Raster::new(g, vec![[0.0, 1.0, 0.0], [third; 3]], None).unwrap();
        let classes = Raster::new(g, vec![1u8, 1], Some(255)).unwrap();
        let (ef, eb) = cell_entropy(&probs, &classes, win(1, 2));
        assert!((ef.unwrap() - 0.549_306_144).abs() < 1e-6);
        assert_eq!(eb, None);
    }

    #[test]
    fn precision_recall_example() {
        // |F| = 10, |C2| = 8, |F ∩ C2| = 6
        let g = grid(20, 1);
        let mut cls = vec![0u8; 20];
        let mut cons = vec![0u8; 20];
        for c in cls.iter_mut().take(10) {
            *c = 1;
        }
        for v in cons.iter_mut().skip(4).take(8) {
            *v = 2;
        }
        let classes = Raster::new(g, cls, Some(255)).unwrap();
        let consensus = Raster::new(g, cons, None).unwrap();
        let (p, r) = cell_precision_recall(&classes, &consensus, 2, win(1, 20));
        assert!((p.unwrap() - 0.6).abs() < 1e-12);
        assert!((r.unwrap() - 0.75).abs() < 1e-12);
        let (p3, r3) = cell_precision_recall(&classes, &consensus, 3, win(1, 20));
        assert_eq!((p3, r3), (Some(0.0), None));
        let none = Raster::new(g, vec![0u8; 20], Some(255)).unwrap();
        assert_eq!(cell_precision_recall(&none, &consensus, 2, win(1, 20)), (None, Some(0.0)));
    }

    #[test]
    fn density_of_full_cell() {
        let g = grid(50, 50);
        let classes = Raster::filled(g, 1u8, Some(255));
        assert_eq!(cell_density(&classes, win(50, 50)), (2500, 0));
        let bg = Raster::filled(g, 0u8, Some(255));
        assert_eq!(cell_density(&bg, win(50, 50)), (0, 0));
    }

    #[test]
    fn derived_ratios_and_features() {
        let g = grid(50, 50);
        let mut classes = Raster::filled(g, 0u8, Some(255));
        for c in 0..10 {
            classes.set(0, c, CLASS_FIELD);
        }
        let probs = Raster::filled(g, [0.0, 1.0, 0.0], None);
        let rec = cell_record(&probs, &classes, None, (3, 4), win(50, 50));
        assert_eq!(rec.field_boundary_ratio, 10.0);
        assert_eq!(rec.field_density, 10.0 / 2500.0);
        assert_eq!(rec.entropy_ratio, None);
        let f = derive_features(&rec, FeatureSet::ModelOnly).unwrap();
        assert_eq!(f, vec![0.0, 0.0, 10.0, 0.0, 10.0, 0.004, 0.0]);
        assert!(matches!(
            derive_features(&rec, FeatureSet::All),
            Err(Error::MissingConsensus("all"))
        ));
        let cons = Raster::filled(g, 2u8, None);
        let rec = cell_record(&probs, &classes, Some(&cons), (3, 4), win(50, 50));
        let lens: Vec<usize> = FeatureSet::ALL
            .iter()
            .map(|&s| derive_features(&rec, s).unwrap().len())
            .collect();
        assert_eq!(lens, vec![7, 8, 11, 12]);
        assert_eq!(*derive_features(&rec, FeatureSet::All).unwrap().last().unwrap(), 2.0);
        assert_eq!("model_pr".parse::<FeatureSet>().unwrap(), FeatureSet::ModelPr);
    }

    #[test]
    fn tile_indicators_and_outputs() {
        // a tile starting on a cell corner, 2x3 cells
        let (global, _) = global_cells_covering(&grid(1, 1));
        let g = GridSpec::from_origin(global.min_lon, global.max_lat, PIXEL_10M_DEG, 150, 100).unwrap();
        let classes = Raster::new(g, (0..g.len()).map(|i| (i % 3) as u8).collect(), Some(255)).unwrap();
        let probs = classes.map(None, |c| {
            let mut p = [0.1; 3];
            p[c as usize] = 0.8;
            p
        });
        let t = compute_indicators(&probs, &classes, None).unwrap();
        assert_eq!((t.grid.width, t.grid.height), (3, 2));
        assert!(t.records.iter().all(|r| r.window_pixels == 2500 && r.valid_pixels == 2500));
        let total: u32 = t.records.iter().map(|r| r.count_field).sum();
        assert_eq!(total as usize, classes.data.iter().filter(|&&c| c == 1).count());
        let dir = tempfile::tempdir().unwrap();
        let paths = write_indicator_rasters(&t, dir.path()).unwrap();
        assert_eq!(paths.len(), 9);
        let csv = dir.path().join("cells.csv");
        write_cell_table(&t.records, &csv).unwrap();
        assert_eq!(read_cell_table(&csv).unwrap(), t.records);
    }

    #[test]
    fn table_rebuilt_from_records() {
        let g = GridSpec::from_origin(28.0, -14.0, crate::raster::PIXEL_10M_DEG, 100, 100).unwrap();
        let probs = Raster::filled(g, [0.2, 0.5, 0.3], None);
        let classes = Raster::filled(g, 1u8, Some(255));
        let t = compute_indicators(&probs, &classes, None).unwrap();
        let mut recs = t.records.clone();
        recs.reverse();
        let back = IndicatorTable::from_records(recs.clone()).unwrap();
        assert_eq!(back, t);
        recs.remove(1);
        let holed = IndicatorTable::from_records(recs.clone()).unwrap();
        assert_eq!(holed.records.len(), 4);
        assert_eq!(holed.records.iter().filter(|r| r.count_field == 0).count(), 1);
        recs.push(recs[0].clone());
        assert!(IndicatorTable::from_records(recs).is_err());
    }
}
