use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::projection::MetricCrs;
use crate::error::{Error, Result};
use crate::geom::{ring_length, signed_area, Point};
use crate::vectorize::FieldPolygon;

pub const DEFAULT_SAMPLE_SIZE: usize = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeStats {
    pub area_ha: f64,
    pub perimeter_m: f64,
    pub polsby_popper: f64,
    pub shape_index: f64,
    pub fractal_dimension: f64,
}

impl ShapeStats {
    /// Compactness indices from area (m²) and perimeter (m). Fractal
    /// dimension is 2·ln(P/4)/ln(A), which is 1 for any square.
    pub fn from_area_perimeter(area_m2: f64, perimeter_m: f64) -> Result<Self> {
        if !(area_m2 > 0.0 && perimeter_m > 0.0) || !area_m2.is_finite() || !perimeter_m.is_finite() {
            return Err(Error::DegeneratePolygon(format!("area {area_m2} m², perimeter {perimeter_m} m")));
        }
        Ok(ShapeStats {
            area_ha: area_m2 / 10_000.0,
            perimeter_m,
            polsby_popper: 4.0 * PI * area_m2 / (perimeter_m * perimeter_m),
            shape_index: perimeter_m / (2.0 * (PI * area_m2).sqrt()),
            fractal_dimension: 2.0 * (perimeter_m / 4.0).ln() / area_m2.ln(),
        })
    }
}

/// Stats for a polygon already in planar metric coordinates.
pub fn planar_shape_stats(exterior: &[Point], holes: &[Vec<Point>]) -> Result<ShapeStats> {
    let area = signed_area(exterior).abs() - holes.iter().map(|h| signed_area(h).abs()).sum::<f64>();
    let perimeter = ring_length(exterior) + holes.iter().map(|h| ring_length(h)).sum::<f64>();
    ShapeStats::from_area_perimeter(area, perimeter)
}

/// Project a lon/lat polygon into `crs`, then planar area and perimeter.
pub fn shape_metrics(poly: &FieldPolygon, crs: MetricCrs) -> Result<ShapeStats> {
    let ext = crs.project_ring(&poly.exterior);
    let holes: Vec<_> = poly.holes.iter().map(|h| crs.project_ring(h)).collect();
    planar_shape_stats(&ext, &holes).map_err(|e| match e {
        Error::DegeneratePolygon(m) => Error::DegeneratePolygon(format!("{}: {m}", poly.id)),
        e => e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub total_count: usize,
    pub total_area_ha: f64,
    pub sample_count: usize,
    pub median_area_ha: f64,
    pub median_perimeter_m: f64,
    pub median_polsby_popper: f64,
    pub median_shape_index: f64,
    pub median_fractal_dimension: f64,
}

/// Middle value, mean of the two middle values for even counts; NaN when empty.
pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Indices of a seeded uniform sample without replacement, ascending.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Medians of shape statistics over a seeded sample; totals over the whole
/// collection use the stored equal-area areas.
pub fn distribution_summary(polys: &[FieldPolygon], crs: MetricCrs, sample_size: usize, seed: u64) -> Result<DistributionSummary> {
    let idx = sample_indices(polys.len(), sample_size, seed);
    let stats = idx
        .iter()
        .map(|&i| shape_metrics(&polys[i], crs))
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&ShapeStats) -> f64| median(&mut stats.iter().map(f).collect::<Vec<_>>());
    Ok(DistributionSummary {
        total_count: polys.len(),
        total_area_ha: polys.iter().map(FieldPolygon::area_ha).sum(),
        sample_count: idx.len(),
        median_area_ha: col(|s| s.area_ha),
        median_perimeter_m: col(|s| s.perimeter_m),
        median_polsby_popper: col(|s| s.polsby_popper),
        median_shape_index: col(|s| s.shape_index),
        median_fractal_dimension: col(|s| s.fractal_dimension),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridSpec, Raster, PIXEL_10M_DEG};
    use crate::vectorize::extract_fields;
    use rand::Rng;

    fn square(x: f64, y: f64, s: f64) -> Vec<Point> {
        vec![[x, y], [x + s, y], [x + s, y + s], [x, y + s], [x, y]]
    }

    #[test]
    fn ten_metre_square() {
        let s = planar_shape_stats(&square(500_000.0, 8_000_000.0, 10.0), &[]).unwrap();
        assert!((s.polsby_popper - PI / 4.0).abs() < 1e-9);
        assert!((s.shape_index - 1.128_379_167).abs() < 1e-8);
        assert!((s.fractal_dimension - 1.0).abs() < 1e-9);
        assert!((s.area_ha - 0.01).abs() < 1e-12);
        assert_eq!(s.perimeter_m, 40.0);
    }

    #[test]
    fn hole_reduces_area_adds_perimeter() {
        let hole: Vec<Point> = square(2.0, 2.0, 1.0).into_iter().rev().collect();
        let s = planar_shape_stats(&square(0.0, 0.0, 5.0), &[hole]).unwrap();
        assert!((s.area_ha * 10_000.0 - 24.0).abs() < 1e-12);
        assert_eq!(s.perimeter_m, 24.0);
    }

    #[test]
    fn degenerate_is_an_error() {
        let flat = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 0.0]];
        assert!(matches!(planar_shape_stats(&flat, &[]), Err(Error::DegeneratePolygon(_))));
    }

    fn traced_fields(seed: u64) -> Vec<FieldPolygon> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::from_origin(28.0, -14.0, PIXEL_10M_DEG, 120, 120).unwrap();
        let data = (0..g.len()).map(|_| u8::from(rng.gen_bool(0.55))).collect();
        extract_fields(&Raster::new(g, data, None).unwrap(), 4, "t", 2024)
    }

    #[test]
    fn traced_polygons_are_rectilinear_bounded() {
        let crs = MetricCrs::from_epsg(32735).unwrap();
        for p in traced_fields(1) {
            let s = shape_metrics(&p, crs).unwrap();
            assert!(s.polsby_popper > 0.0 && s.polsby_popper <= PI / 4.0 + 1e-6, "{s:?}");
            assert!(s.shape_index >= 1.0);
            // projected area agrees with the equal-area sphere to well under 1 %
            assert!((s.area_ha / p.area_ha() - 1.0).abs() < 5e-3, "{} vs {}", s.area_ha, p.area_ha());
        }
    }

    #[test]
    fn identical_squares_summary() {
        let g = GridSpec::from_origin(28.0, -14.0, PIXEL_10M_DEG, 3, 3).unwrap();
        let p = extract_fields(&Raster::filled(g, 1u8, None), 4, "t", 2024).remove(0);
        let crs = MetricCrs::from_epsg(32735).unwrap();
        let one = shape_metrics(&p, crs).unwrap();
        let polys = vec![p; 7];
        let d = distribution_summary(&polys, crs, 5, 1).unwrap();
        assert_eq!(d.sample_count, 5);
        assert_eq!(d.total_count, 7);
        assert_eq!(d.median_area_ha, one.area_ha);
        assert_eq!(d.median_polsby_popper, one.polsby_popper);
        assert_eq!(d.median_fractal_dimension, one.fractal_dimension);
    }

    #[test]
    fn full_sample_matches_enumeration() {
        let polys: Vec<_> = (0..4).flat_map(traced_fields).take(1_000).collect();
        let crs = MetricCrs::from_epsg(32735).unwrap();
        let d = distribution_summary(&polys, crs, polys.len(), 0).unwrap();
        let mut areas: Vec<f64> = polys.iter().map(|p| shape_metrics(p, crs).unwrap().area_ha).collect();
        areas.sort_by(f64::total_cmp);
        let n = areas.len();
        let expect = if n % 2 == 1 { areas[n / 2] } else { (areas[n / 2 - 1] + areas[n / 2]) / 2.0 };
        assert_eq!(d.median_area_ha, expect);
        assert_eq!(d.sample_count, n);
    }

    #[test]
    fn sampling_is_seeded() {
        assert_eq!(sample_indices(1000, 10, 4), sample_indices(1000, 10, 4));
        assert_ne!(sample_indices(1000, 10, 4), sample_indices(1000, 10, 5));
        let s = sample_indices(1000, 10, 4);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
