use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::ConfidenceModel;
use crate::error::{Error, Result};
use crate::indicators::{derive_features, IndicatorTable};
use crate::raster::Raster;
use crate::vectorize::FieldPolygon;

/// Threshold sweep used for retention curves: 0.00, 0.05, ..., 1.00.
pub const DEFAULT_THRESHOLDS: [f64; 21] = {
    let mut t = [0.0; 21];
    let mut i = 0;
    while i < 21 {
        t[i] = i as f64 / 20.0;
        i += 1;
    }
    t
};

/// Score every cell with field pixels; other cells are NaN.
pub fn apply_confidence(model: &ConfidenceModel, table: &IndicatorTable) -> Result<Raster<f32>> {
    let has_consensus = table.records.iter().any(|r| r.has_consensus());
    if model.feature_set.uses_consensus() && !has_consensus {
        return Err(Error::FeatureSetMismatch {
            model: model.feature_set.to_string(),
            given: "model_only".into(),
        });
    }
    let data = table
        .records
        .par_iter()
        .map(|r| {
            if r.count_field == 0 {
                return Ok(f32::NAN);
            }
            Ok(model.predict_proba(&derive_features(r, model.feature_set)?) as f32)
        })
        .collect::<Result<Vec<f32>>>()?;
    Raster::new(table.grid, data, Some(f32::NAN))
}

/// Score of the cell containing a point; nodata and outside count as 0.
pub fn confidence_at(conf: &Raster<f32>, lon: f64, lat: f64) -> f64 {
    conf.sample(lon, lat)
        .filter(|&v| !conf.is_nodata(v))
        .map_or(0.0, f64::from)
}

/// Set each polygon's confidence attribute from its centroid cell; unset on nodata.
pub fn attach_confidence(polys: &mut [FieldPolygon], conf: &Raster<f32>) {
    for p in polys {
        let [lon, lat] = p.centroid();
        p.confidence = conf.sample(lon, lat).filter(|&v| !conf.is_nodata(v)).map(f64::from);
    }
}

/// Polygons whose centroid cell scores at least `t` (inclusive).
pub fn threshold_polygons(polys: &[FieldPolygon], conf: &Raster<f32>, t: f64) -> Vec<FieldPolygon> {
    polys
        .iter()
        .filter(|p| {
            let [lon, lat] = p.centroid();
            confidence_at(conf, lon, lat) >= t
        })
        .cloned()
        .collect()
}

/// Zero density cells scoring below `t`; density nodata is left alone.
pub fn threshold_density(density: &Raster<f32>, conf: &Raster<f32>, t: f64) -> Result<Raster<f32>> {
    density.grid.ensure_same(&conf.grid, "density vs confidence")?;
    let data = density
        .data
        .iter()
        .zip(&conf.data)
        .map(|(&d, &c)| {
            let score = if conf.is_nodata(c) { 0.0 } else { f64::from(c) };
            if density.is_nodata(d) || score >= t {
                d
            } else {
                0.0
            }
        })
        .collect();
    Raster::new(density.grid, data, density.nodata)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub threshold: f64,
    pub fields: usize,
    pub area_m2: f64,
    pub fields_frac: f64,
    pub area_frac: f64,
}

/// Fields and area kept at each threshold.
pub fn retention_curve(polys: &[FieldPolygon], conf: &Raster<f32>, thresholds: &[f64]) -> Vec<RetentionRow> {
    let scored: Vec<(f64, f64)> = polys
        .iter()
        .map(|p| {
            let [lon, lat] = p.centroid();
            (confidence_at(conf, lon, lat), p.area_m2)
        })
        .collect();
    retention_from_scores(&scored, thresholds)
}

/// Retention over (score, area m²) pairs, for collections scored against
/// several confidence rasters.
pub fn retention_from_scores(scored: &[(f64, f64)], thresholds: &[f64]) -> Vec<RetentionRow> {
    let total_area: f64 = scored.iter().map(|s| s.1).sum();
    thresholds
        .iter()
        .map(|&t| {
            let (fields, area_m2) = scored
                .iter()
                .filter(|s| s.0 >= t)
                .fold((0, 0.0), |(n, a), s| (n + 1, a + s.1));
            RetentionRow {
                threshold: t,
                fields,
                area_m2,
                fields_frac: if scored.is_empty() { 1.0 } else { fields as f64 / scored.len() as f64 },
                area_frac: if total_area > 0.0 { area_m2 / total_area } else { 1.0 },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;
    use crate::raster::GridSpec;

    fn poly_at(x: f64, y: f64, area: f64) -> FieldPolygon {
        let p = Polygon::rect(x - 0.01, y - 0.01, x + 0.01, y + 0.01);
        FieldPolygon {
            id: format!("{x}:{y}"),
            exterior: p.exterior,
            holes: vec![],
            pixel_count: 4,
            area_m2: area,
            perimeter_m: 1.0,
            country: None,
            confidence: None,
            year: 2025,
            tile_id: "t".into(),
        }
    }

    fn conf() -> Raster<f32> {
        let g = GridSpec::from_origin(0.0, 1.0, 0.5, 2, 2).unwrap();
        Raster::new(g, vec![0.39, 0.40, 0.55, f32::NAN], Some(f32::NAN)).unwrap()
    }

    #[test]
    fn inclusive_threshold() {
        let polys = vec![poly_at(0.25, 0.75, 1.0), poly_at(0.75, 0.75, 2.0), poly_at(0.25, 0.25, 3.0), poly_at(0.75, 0.25, 4.0)];
        let kept = |t| threshold_polygons(&polys, &conf(), t).iter().map(|p| p.area_m2).collect::<Vec<_>>();
        assert_eq!(kept(0.4), vec![2.0, 3.0]);
        assert_eq!(kept(0.5), vec![3.0]);
        assert_eq!(kept(0.0).len(), 4);
        let curve = retention_curve(&polys, &conf(), &DEFAULT_THRESHOLDS);
        assert_eq!((curve[0].fields_frac, curve[0].area_frac), (1.0, 1.0));
        assert!(curve.windows(2).all(|w| w[1].fields <= w[0].fields && w[1].area_m2 <= w[0].area_m2));
        assert_eq!(curve[8].threshold, 0.4);
        assert_eq!(curve[8].fields, 2);
        let mut attached = polys.clone();
        attach_confidence(&mut attached, &conf());
        assert_eq!(attached[3].confidence, None);
        assert_eq!(attached[2].confidence, Some(f64::from(0.55f32)));
    }

    #[test]
    fn density_zeroed_below_threshold() {
        let c = conf();
        let d = Raster::new(c.grid, vec![10.0, 20.0, f32::NAN, 40.0], Some(f32::NAN)).unwrap();
        let out = threshold_density(&d, &c, 0.4).unwrap();
        assert_eq!(out.data[..2], [0.0, 20.0]);
        assert!(out.data[2].is_nan());
        assert_eq!(out.data[3], 0.0);
        assert_eq!(threshold_density(&d, &c, 0.0).unwrap().data[3], 40.0);
    }
}
