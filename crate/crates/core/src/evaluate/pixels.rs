use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::CoverageHull;
use crate::error::{Error, Result};
use crate::raster::{rasterize_polygons, resample_nearest, GridSpec, Raster, RasterizeMode};
use crate::stitch::{CLASS_BACKGROUND, CLASS_BOUNDARY, CLASS_FIELD};

/// Which predicted classes count as a positive pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveClasses {
    /// Field interior and field boundary.
    #[default]
    FieldAndBoundary,
    FieldOnly,
}

impl PositiveClasses {
    pub fn is_positive(self, class: u8) -> bool {
        match self {
            PositiveClasses::FieldAndBoundary => class == CLASS_FIELD || class == CLASS_BOUNDARY,
            PositiveClasses::FieldOnly => class == CLASS_FIELD,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PositiveClasses::FieldAndBoundary => "field_and_boundary",
            PositiveClasses::FieldOnly => "field_only",
        }
    }
}

impl FromStr for PositiveClasses {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "field_and_boundary" | "1,2" => Ok(PositiveClasses::FieldAndBoundary),
            "field_only" | "field" | "1" => Ok(PositiveClasses::FieldOnly),
            _ => Err(Error::InvalidInput(format!("unknown positive-class mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Zero when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Zero when there are no reference positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn iou(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Confusion) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(it: I) -> Confusion {
        it.fold(Confusion::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Unfiltered,
    Confidence { threshold: f64 },
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Unfiltered => f.write_str("unfiltered"),
            Variant::Confidence { threshold } => write!(f, "conf>={threshold}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub region: String,
    pub variant: Variant,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

impl EvaluationReport {
    /// Metrics from pooled counts. F1 and IoU come from the counts directly,
    /// so `iou == f1 / (2 - f1)` up to rounding.
    pub fn from_confusion(region: &str, variant: Variant, confusion: Confusion) -> Result<Self> {
        if confusion.total() == 0 {
            return Err(Error::EmptyRegion);
        }
        Ok(EvaluationReport {
            region: region.to_string(),
            variant,
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            iou: confusion.iou(),
            confusion,
        })
    }

    /// Largest deviation from the binary identity IoU = F1 / (2 − F1).
    pub fn identity_error(&self) -> f64 {
        (self.iou - self.f1 / (2.0 - self.f1)).abs()
    }
}

fn aligned(pred: &Raster<u8>, other: &Raster<u8>, what: &str) -> Result<()> {
    pred.grid.ensure_same(&other.grid, what)
}

/// Per-pixel counts over pixels where `region` is 1. A prediction pixel on
/// nodata is a negative prediction; `gt` and `region` are 0/1 masks.
pub fn pixel_confusion(pred: &Raster<u8>, gt: &Raster<u8>, region: &Raster<u8>, positive: PositiveClasses) -> Result<Confusion> {
    aligned(pred, gt, "prediction vs reference")?;
    aligned(pred, region, "prediction vs region")?;
    let w = pred.grid.width.max(1);
    let c = pred
        .data
        .par_chunks(w)
        .zip(gt.data.par_chunks(w))
        .zip(region.data.par_chunks(w))
        .map(|((p, g), r)| {
            let mut c = Confusion::default();
            for i in 0..p.len() {
                if r[i] == 1 {
                    let predicted = !pred.is_nodata(p[i]) && positive.is_positive(p[i]);
                    c.record(predicted, g[i] == 1);
                }
            }
            c
        })
        .sum();
    Ok(c)
}

pub fn pixel_metrics(
    region_id: &str,
    pred: &Raster<u8>,
    gt: &Raster<u8>,
    region: &Raster<u8>,
    positive: PositiveClasses,
    variant: Variant,
) -> Result<EvaluationReport> {
    EvaluationReport::from_confusion(region_id, variant, pixel_confusion(pred, gt, region, positive)?)
}

/// One aligned (prediction, reference, region) triple per tile.
pub struct TileInputs<'a> {
    pub pred: &'a Raster<u8>,
    pub gt: &'a Raster<u8>,
    pub region: &'a Raster<u8>,
}

/// Country-wide report from per-tile confusion matrices, summed.
pub fn pooled_metrics(region_id: &str, tiles: &[TileInputs<'_>], positive: PositiveClasses, variant: Variant) -> Result<EvaluationReport> {
    let pooled = tiles
        .par_iter()
        .map(|t| pixel_confusion(t.pred, t.gt, t.region, positive))
        .try_reduce(Confusion::default, |a, b| Ok(a + b))?;
    EvaluationReport::from_confusion(region_id, variant, pooled)
}

/// Replicate 500 m confidence onto a 10 m grid and keep cells scoring at
/// least `t`. Nodata and uncovered cells give false.
pub fn confidence_mask_10m(conf: &Raster<f32>, fine: &GridSpec, t: f64) -> Result<Raster<u8>> {
    let up = resample_nearest(conf, fine, f32::NAN)?.raster;
    Ok(up.map(None, |v| u8::from(!v.is_nan() && f64::from(v) >= t)))
}

/// Predictions with pixels outside `keep` reset to background.
pub fn mask_predictions(pred: &Raster<u8>, keep: &Raster<u8>) -> Result<Raster<u8>> {
    aligned(pred, keep, "prediction vs confidence mask")?;
    let data = pred
        .data
        .iter()
        .zip(&keep.data)
        .map(|(&p, &k)| if k == 1 || pred.is_nodata(p) { p } else { CLASS_BACKGROUND })
        .collect();
    Raster::new(pred.grid, data, pred.nodata)
}

/// Recall over reference-positive pixels whose centres fall inside the
/// country's coverage hulls.
pub fn hull_recall(pred: &Raster<u8>, gt: &Raster<u8>, hull: &CoverageHull, positive: PositiveClasses) -> Result<f64> {
    let c = hull_confusion(pred, gt, hull, positive)?;
    if c.tp + c.fn_ == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(c.recall())
}

/// Confusion counts over pixels whose centres fall inside the hulls; sum
/// these across tiles for a pooled recall.
pub fn hull_confusion(pred: &Raster<u8>, gt: &Raster<u8>, hull: &CoverageHull, positive: PositiveClasses) -> Result<Confusion> {
    let region = rasterize_polygons(&hull.hulls, &pred.grid, RasterizeMode::Center);
    pixel_confusion(pred, gt, &region, positive)
}

/// Aligned plain-text table, one row per report.
pub fn format_reports(reports: &[EvaluationReport]) -> String {
    let mut s = format!(
        "{:<16} {:<14} {:>9} {:>9} {:>9} {:>9}\n",
        "region", "variant", "precision", "recall", "f1", "iou"
    );
    for r in reports {
        s += &format!(
            "{:<16} {:<14} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            r.region,
            r.variant.to_string(),
            r.precision,
            r.recall,
            r.f1,
            r.iou
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(w: usize, h: usize) -> GridSpec {
        GridSpec::from_origin(20.0, 50.0, crate::raster::PIXEL_10M_DEG, w, h).unwrap()
    }

    fn r(g: GridSpec, data: Vec<u8>) -> Raster<u8> {
        Raster::new(g, data, None).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let g = grid(4, 4);
        let gt = r(g, (0..16).map(|i| (i % 3 == 0) as u8).collect());
        let pred = gt.clone();
        let rep = pixel_metrics("x", &pred, &gt, &r(g, vec![1; 16]), PositiveClasses::FieldOnly, Variant::Unfiltered).unwrap();
        assert_eq!((rep.precision, rep.recall, rep.f1, rep.iou), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn half_coverage() {
        let g = grid(4, 2);
        let gt = r(g, vec![1, 1, 1, 1, 0, 0, 0, 0]);
        let pred = r(g, vec![2, 1, 0, 0, 0, 0, 0, 0]);
        let rep = pixel_metrics("x", &pred, &gt, &r(g, vec![1; 8]), PositiveClasses::FieldAndBoundary, Variant::Unfiltered).unwrap();
        assert_eq!(rep.precision, 1.0);
        assert_eq!(rep.recall, 0.5);
        assert!((rep.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rep.iou, 0.5);
    }

    #[test]
    fn matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(100, 100);
        let pred = r(g, (0..10_000).map(|_| rng.gen_range(0..3)).collect());
        let gt = r(g, (0..10_000).map(|_| rng.gen_range(0..2)).collect());
        let region = r(g, (0..10_000).map(|_| u8::from(rng.gen_bool(0.8))).collect());
        for positive in [PositiveClasses::FieldAndBoundary, PositiveClasses::FieldOnly] {
            let c = pixel_confusion(&pred, &gt, &region, positive).unwrap();
            let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
            for i in 0..10_000 {
                if region.data[i] == 0 {
                    continue;
                }
                let p = match positive {
                    PositiveClasses::FieldAndBoundary => pred.data[i] >= 1,
                    PositiveClasses::FieldOnly => pred.data[i] == 1,
                };
                match (p, gt.data[i] == 1) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            assert_eq!(c, Confusion { tp, fp, fn_, tn });
            let rep = EvaluationReport::from_confusion("x", Variant::Unfiltered, c).unwrap();
            assert!(rep.identity_error() < 1e-12);
        }
    }

    #[test]
    fn empty_region_is_an_error() {
        let g = grid(3, 3);
        let z = r(g, vec![0; 9]);
        let e = pixel_metrics("x", &z, &z, &z, PositiveClasses::FieldOnly, Variant::Unfiltered);
        assert!(matches!(e, Err(Error::EmptyRegion)));
    }

    #[test]
    fn nodata_prediction_is_negative() {
        let g = grid(2, 1);
        let pred = Raster::new(g, vec![255, 1], Some(255)).unwrap();
        let gt = r(g, vec![1, 1]);
        let c = pixel_confusion(&pred, &gt, &r(g, vec![1, 1]), PositiveClasses::FieldOnly).unwrap();
        assert_eq!(c, Confusion { tp: 1, fp: 0, fn_: 1, tn: 0 });
    }

    #[test]
    fn mask_from_single_cell() {
        let coarse = GridSpec::from_origin(20.0, 50.0, 1.0 / 240.0, 2, 1).unwrap();
        let conf = Raster::new(coarse, vec![0.6f32, f32::NAN], Some(f32::NAN)).unwrap();
        let fine = grid(100, 50);
        let m = confidence_mask_10m(&conf, &fine, 0.4).unwrap();
        assert_eq!(m.data.iter().filter(|&&v| v == 1).count(), 2_500);
        for row in 0..50 {
            assert!(m.data[row * 100..row * 100 + 50].iter().all(|&v| v == 1));
            assert!(m.data[row * 100 + 50..(row + 1) * 100].iter().all(|&v| v == 0));
        }
        // inclusive threshold
        let m = confidence_mask_10m(&conf, &fine, f64::from(0.6f32)).unwrap();
        assert_eq!(m.data.iter().filter(|&&v| v == 1).count(), 2_500);
    }

    #[test]
    fn masking_removes_only_positives_outside() {
        let g = grid(3, 1);
        let pred = r(g, vec![1, 2, 1]);
        let keep = r(g, vec![1, 0, 0]);
        assert_eq!(mask_predictions(&pred, &keep).unwrap().data, vec![1, 0, 0]);
    }

    #[test]
    fn hull_recall_cases() {
        let g = grid(10, 10);
        let p = crate::raster::PIXEL_10M_DEG;
        let hull = CoverageHull {
            country: "ZZZ".into(),
            hulls: vec![Polygon::rect(20.0, 50.0 - 5.0 * p, 20.0 + 5.0 * p, 50.0)],
        };
        let mut gt = r(g, vec![0; 100]);
        for row in 0..10 {
            gt.set(row, row, 1);
        }
        // gt inside the hull is the diagonal pixels (0,0)..(4,4)
        assert_eq!(hull_recall(&gt, &gt, &hull, PositiveClasses::FieldOnly).unwrap(), 1.0);
        let none = r(g, vec![0; 100]);
        assert_eq!(hull_recall(&none, &gt, &hull, PositiveClasses::FieldOnly).unwrap(), 0.0);
        let mut half = none.clone();
        half.set(0, 0, 1);
        half.set(9, 9, 1);
        assert_eq!(hull_recall(&half, &gt, &hull, PositiveClasses::FieldOnly).unwrap(), 0.2);
        let e = hull_recall(&gt, &none, &hull, PositiveClasses::FieldOnly);
        assert!(matches!(e, Err(Error::EmptyRegion)));
    }

    #[test]
    fn tiles_pool_to_single_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = grid(40, 40);
        let pred = r(g, (0..1600).map(|_| rng.gen_range(0..3)).collect());
        let gt = r(g, (0..1600).map(|_| rng.gen_range(0..2)).collect());
        let region = r(g, (0..1600).map(|_| u8::from(rng.gen_bool(0.7))).collect());
        let whole = pixel_metrics("x", &pred, &gt, &region, PositiveClasses::FieldAndBoundary, Variant::Unfiltered).unwrap();
        let windows: Vec<_> = [(0, 0), (0, 20), (20, 0), (20, 20)]
            .iter()
            .map(|&(r0, c0)| crate::raster::PixelWindow { row0: r0, col0: c0, rows: 20, cols: 20 })
            .collect();
        let parts: Vec<_> = windows.iter().map(|&w| (pred.crop(w), gt.crop(w), region.crop(w))).collect();
        let tiles: Vec<_> = parts.iter().map(|(p, g, r)| TileInputs { pred: p, gt: g, region: r }).collect();
        let pooled = pooled_metrics("x", &tiles, PositiveClasses::FieldAndBoundary, Variant::Unfiltered).unwrap();
        assert_eq!(pooled, whole);
    }

    #[test]
    fn table_layout() {
        let c = Confusion { tp: 1, fp: 0, fn_: 1, tn: 2 };
        let t = format_reports(&[
            EvaluationReport::from_confusion("Austria", Variant::Unfiltered, c).unwrap(),
            EvaluationReport::from_confusion("Austria", Variant::Confidence { threshold: 0.4 }, c).unwrap(),
        ]);
        let lines: Vec<_> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].contains("conf>=0.4"));
        assert_eq!(lines[1].len(), lines[2].len());
    }
}
