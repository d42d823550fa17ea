use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dbscan::CoverageHull;
use crate::error::{Error, Result};
use crate::geom::Polygon;
use crate::indicators::{derive_features, CellIndicatorRecord, FeatureSet};
use crate::raster::{make_global_grid, rasterize_polygons, GridSpec, Raster, RasterizeMode};

pub const DEFAULT_SUBSAMPLE_CAP: usize = 5000;

/// Upper bound on a non-field cell's mean consensus count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropFilter {
    None,
    Le3,
    Le2,
    Le1,
}

impl CropFilter {
    pub const ALL: [CropFilter; 4] = [CropFilter::None, CropFilter::Le3, CropFilter::Le2, CropFilter::Le1];

    pub fn max(self) -> Option<f64> {
        match self {
            CropFilter::None => None,
            CropFilter::Le3 => Some(3.0),
            CropFilter::Le2 => Some(2.0),
            CropFilter::Le1 => Some(1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CropFilter::None => "none",
            CropFilter::Le3 => "le3",
            CropFilter::Le2 => "le2",
            CropFilter::Le1 => "le1",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl std::fmt::Display for CropFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CropFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown crop filter '{s}' (none, le3, le2, le1)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCell {
    pub row: usize,
    pub col: usize,
    pub country: String,
    /// true = field (cell touched by a ground-truth polygon).
    pub label: bool,
    pub features: Vec<f64>,
    pub consensus_mean: Option<f64>,
}

/// 1 for every cell of `grid` touched by a ground-truth polygon.
pub fn gt_cell_raster(gt: &[Polygon], grid: &GridSpec) -> Raster<u8> {
    rasterize_polygons(gt, grid, RasterizeMode::AllTouched)
}

/// Labelled cells for confidence-model training.
///
/// Candidates are cells whose centre lies in one of the coverage hulls and
/// where the model predicted field pixels. A candidate touched by ground
/// truth (`gt`, indexed like the global 500 m grid through `sample`) is a
/// field cell; other candidates are non-field cells and are kept only when
/// their mean consensus passes `filter`. The cell's country is that of the
/// first hull containing it.
pub fn build_training_set(
    records: &[CellIndicatorRecord],
    gt: &Raster<u8>,
    hulls: &[CoverageHull],
    filter: CropFilter,
    set: FeatureSet,
) -> Result<Vec<TrainingCell>> {
    let global = make_global_grid();
    let mut out = Vec::new();
    for rec in records {
        if rec.count_field == 0 {
            continue;
        }
        let (lon, lat) = global.pixel_center(rec.row, rec.col);
        let Some(hull) = hulls.iter().find(|h| h.contains([lon, lat])) else {
            continue;
        };
        let label = gt.sample(lon, lat) == Some(1);
        if !label {
            if let Some(max) = filter.max() {
                let cm = rec.consensus_mean.ok_or(Error::MissingConsensus("crop filter"))?;
                if cm > max {
                    continue;
                }
            }
        }
        out.push(TrainingCell {
            row: rec.row,
            col: rec.col,
            country: hull.country.clone(),
            label,
            features: derive_features(rec, set)?,
            consensus_mean: rec.consensus_mean,
        });
    }
    Ok(out)
}

/// Up to `cap` cells per (country, label), drawn uniformly without
/// replacement. The result keeps the input order.
pub fn balanced_subsample(cells: &[TrainingCell], cap: usize, seed: u64) -> Vec<TrainingCell> {
    let mut groups: BTreeMap<(&str, bool), Vec<usize>> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate() {
        groups.entry((c.country.as_str(), c.label)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for idx in groups.values() {
        if idx.len() <= cap {
            keep.extend_from_slice(idx);
        } else {
            keep.extend(rand::seq::index::sample(&mut rng, idx.len(), cap).into_iter().map(|k| idx[k]));
        }
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| cells[i].clone()).collect()
}

/// Feature matrix and labels.
pub fn design(cells: &[TrainingCell]) -> (Vec<Vec<f64>>, Vec<bool>) {
    (cells.iter().map(|c| c.features.clone()).collect(), cells.iter().map(|c| c.label).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::cell_record;
    use crate::raster::{PixelWindow, PIXEL_10M_DEG};

    fn record(row: usize, col: usize, count_field: u32, consensus: f64) -> CellIndicatorRecord {
        let g = GridSpec::from_origin(0.0, 1.0, PIXEL_10M_DEG, 4, 4).unwrap();
        let mut classes = Raster::filled(g, 0u8, Some(255));
        for i in 0..count_field as usize {
            classes.data[i] = 1;
        }
        let probs = Raster::filled(g, [0.2, 0.7, 0.1], None);
        let cons = Raster::filled(g, consensus as u8, None);
        let w = PixelWindow { row0: 0, col0: 0, rows: 4, cols: 4 };
        cell_record(&probs, &classes, Some(&cons), (row, col), w)
    }

    fn setup() -> (Raster<u8>, Vec<CoverageHull>) {
        let global = make_global_grid();
        // hull around cells (100..=102, 200..=202)
        let (w, _, _, n) = global.pixel_bounds(100, 200);
        let (_, s, e, _) = global.pixel_bounds(102, 202);
        let hull = CoverageHull {
            country: "AUT".into(),
            hulls: vec![Polygon::rect(w, s, e, n)],
        };
        let sub = global.window_grid(PixelWindow { row0: 100, col0: 200, rows: 3, cols: 3 });
        let mut gt = Raster::filled(sub, 0u8, None);
        gt.set(0, 0, 1);
        (gt, vec![hull])
    }

    #[test]
    fn labelling_filter_and_hull() {
        let (gt, hulls) = setup();
        let recs = vec![
            record(100, 200, 5, 5.0), // GT cell: field regardless of consensus
            record(101, 201, 5, 5.0), // non-field, consensus 5 > 2: dropped
            record(101, 202, 5, 2.0), // non-field, kept at le2
            record(102, 202, 0, 0.0), // inactive
            record(50, 50, 5, 0.0),   // outside hull
        ];
        let cells = build_training_set(&recs, &gt, &hulls, CropFilter::Le2, FeatureSet::ModelOnly).unwrap();
        let got: Vec<(usize, usize, bool)> = cells.iter().map(|c| (c.row, c.col, c.label)).collect();
        assert_eq!(got, vec![(100, 200, true), (101, 202, false)]);
        assert!(cells.iter().all(|c| c.country == "AUT" && c.features.len() == 7));
        let all = build_training_set(&recs, &gt, &hulls, CropFilter::None, FeatureSet::All).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].features.len(), 12);
    }

    #[test]
    fn subsample_caps_per_group() {
        let cell = |country: &str, label: bool, i: usize| TrainingCell {
            row: i,
            col: 0,
            country: country.into(),
            label,
            features: vec![i as f64],
            consensus_mean: None,
        };
        let mut cells: Vec<TrainingCell> = (0..12_000).map(|i| cell("FIN", true, i)).collect();
        cells.extend((0..300).map(|i| cell("FIN", false, i)));
        cells.extend((0..7000).map(|i| cell("LVA", false, i)));
        let s = balanced_subsample(&cells, 5000, 42);
        let count = |c: &str, l: bool| s.iter().filter(|x| x.country == c && x.label == l).count();
        assert_eq!(count("FIN", true), 5000);
        assert_eq!(count("FIN", false), 300);
        assert_eq!(count("LVA", false), 5000);
        assert_eq!(s, balanced_subsample(&cells, 5000, 42));
        assert_ne!(s, balanced_subsample(&cells, 5000, 43));
    }

    #[test]
    fn filter_names() {
        for f in CropFilter::ALL {
            assert_eq!(f.as_str().parse::<CropFilter>().unwrap(), f);
            assert_eq!(CropFilter::from_code(f.code()), Some(f));
        }
        assert!("le4".parse::<CropFilter>().is_err());
    }
}
