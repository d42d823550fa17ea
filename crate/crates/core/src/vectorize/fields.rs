use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{Point, Polygon, Ring};
use crate::raster::Raster;

use super::components::{connected_components, filter_min_area};
use super::trace::{trace_polygons, TracedPolygon};
use crate::stitch::CLASS_FIELD;

/// Mean Earth radius (IUGG), metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

pub const DEFAULT_MIN_PIXELS: usize = 4;

/// A vectorized field with its attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPolygon {
    pub id: String,
    pub exterior: Ring,
    pub holes: Vec<Ring>,
    pub pixel_count: u64,
    pub area_m2: f64,
    pub perimeter_m: f64,
    /// ISO 3166 alpha-3; `None` when the centroid falls on ADM0 nodata.
    pub country: Option<String>,
    pub confidence: Option<f64>,
    pub year: i32,
    pub tile_id: String,
}

impl FieldPolygon {
    pub fn polygon(&self) -> Polygon {
        Polygon::new(self.exterior.clone(), self.holes.clone())
    }

    pub fn centroid(&self) -> Point {
        self.polygon().centroid()
    }

    pub fn area_ha(&self) -> f64 {
        self.area_m2 / 10_000.0
    }
}

/// Stable id: first 16 hex digits of SHA-256 over `tile_id/label/year`.
pub fn field_id(tile_id: &str, label: u32, year: i32) -> String {
    let digest = Sha256::digest(format!("{tile_id}/{label}/{year}").as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Area on the sphere using the cylindrical equal-area projection
/// (x = R·λ, y = R·sin φ). Exact for rings made of meridian and parallel
/// segments, which is what pixel-edge tracing produces.
pub fn ring_area_m2(ring: &[Point]) -> f64 {
    let Some(&[lon0, lat0]) = ring.first() else {
        return 0.0;
    };
    let phi0 = lat0.to_radians();
    // x and y relative to the first vertex; sin φ − sin φ0 via the
    // sum-to-product identity to avoid cancellation on metre-scale rings
    let xy = |p: &Point| {
        let phi = p[1].to_radians();
        let dy = 2.0 * (0.5 * (phi + phi0)).cos() * (0.5 * (phi - phi0)).sin();
        ((p[0] - lon0).to_radians(), dy)
    };
    let mut s = 0.0;
    for w in ring.windows(2) {
        let ((x0, y0), (x1, y1)) = (xy(&w[0]), xy(&w[1]));
        s += x0 * y1 - x1 * y0;
    }
    0.5 * s.abs() * EARTH_RADIUS_M * EARTH_RADIUS_M
}

/// Length in metres. Parallels use R·cos φ·Δλ, meridians R·Δφ; other
/// segments fall back to the same local approximation at mid-latitude.
pub fn ring_length_m(ring: &[Point]) -> f64 {
    ring.windows(2)
        .map(|w| {
            let dl = (w[1][0] - w[0][0]).to_radians();
            let dp = (w[1][1] - w[0][1]).to_radians();
            let mid = (0.5 * (w[0][1] + w[1][1])).to_radians();
            EARTH_RADIUS_M * (dl * mid.cos()).hypot(dp)
        })
        .sum()
}

pub fn polygon_area_m2(p: &Polygon) -> f64 {
    ring_area_m2(&p.exterior) - p.holes.iter().map(|h| ring_area_m2(h)).sum::<f64>()
}

pub fn polygon_perimeter_m(p: &Polygon) -> f64 {
    p.rings().map(|r| ring_length_m(r)).sum()
}

pub fn to_field_polygon(t: TracedPolygon, tile_id: &str, year: i32) -> FieldPolygon {
    FieldPolygon {
        id: field_id(tile_id, t.label, year),
        area_m2: polygon_area_m2(&t.polygon),
        perimeter_m: polygon_perimeter_m(&t.polygon),
        exterior: t.polygon.exterior,
        holes: t.polygon.holes,
        pixel_count: t.pixel_count as u64,
        country: None,
        confidence: None,
        year,
        tile_id: tile_id.to_string(),
    }
}

/// Class raster to field polygons: components of the field-interior class,
/// minimum-area filter, pixel-edge tracing and metric attributes.
pub fn extract_fields(classes: &Raster<u8>, min_pixels: usize, tile_id: &str, year: i32) -> Vec<FieldPolygon> {
    let comps = filter_min_area(&connected_components(classes, CLASS_FIELD), min_pixels);
    trace_polygons(&comps)
        .into_iter()
        .map(|t| to_field_polygon(t, tile_id, year))
        .collect()
}

/// ISO 3166 numeric code to alpha-3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryTable(pub BTreeMap<i32, String>);

const BUILTIN_COUNTRIES: &[(i32, &str)] = &[
    (24, "AGO"),
    (36, "AUS"),
    (40, "AUT"),
    (56, "BEL"),
    (72, "BWA"),
    (76, "BRA"),
    (116, "KHM"),
    (124, "CAN"),
    (156, "CHN"),
    (180, "COD"),
    (191, "HRV"),
    (203, "CZE"),
    (208, "DNK"),
    (231, "ETH"),
    (233, "EST"),
    (246, "FIN"),
    (250, "FRA"),
    (276, "DEU"),
    (348, "HUN"),
    (356, "IND"),
    (380, "ITA"),
    (404, "KEN"),
    (428, "LVA"),
    (440, "LTU"),
    (442, "LUX"),
    (454, "MWI"),
    (508, "MOZ"),
    (516, "NAM"),
    (528, "NLD"),
    (566, "NGA"),
    (616, "POL"),
    (620, "PRT"),
    (643, "RUS"),
    (646, "RWA"),
    (703, "SVK"),
    (704, "VNM"),
    (705, "SVN"),
    (710, "ZAF"),
    (716, "ZWE"),
    (724, "ESP"),
    (752, "SWE"),
    (756, "CHE"),
    (800, "UGA"),
    (826, "GBR"),
    (834, "TZA"),
    (840, "USA"),
    (894, "ZMB"),
];

impl Default for CountryTable {
    fn default() -> Self {
        CountryTable(BUILTIN_COUNTRIES.iter().map(|&(k, v)| (k, v.to_string())).collect())
    }
}

impl CountryTable {
    /// Headerless or headed CSV of `code,alpha3` rows.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::parse("country table", path, e))?;
        let mut map = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse("country table", path, e))?;
            let (Some(code), Some(iso)) = (rec.get(0), rec.get(1)) else {
                return Err(Error::parse("country table", path, "expected two columns"));
            };
            match code.trim().parse::<i32>() {
                Ok(c) => {
                    map.insert(c, iso.trim().to_string());
                }
                Err(_) if map.is_empty() => continue, // header row
                Err(e) => return Err(Error::parse("country table", path, e)),
            }
        }
        Ok(CountryTable(map))
    }

    pub fn alpha3(&self, code: i32) -> Option<&str> {
        self.0.get(&code).map(String::as_str)
    }

    pub fn code_of(&self, alpha3: &str) -> Option<i32> {
        self.0.iter().find(|(_, v)| v.as_str() == alpha3).map(|(&k, _)| k)
    }
}

/// Country of each polygon's centroid. Centroids on nodata, outside the
/// raster, or on codes missing from the table leave the country unset. A
/// polygon straddling a border takes the code on its centroid's side.
pub fn assign_country(polys: &mut [FieldPolygon], adm0: &Raster<i32>, table: &CountryTable) {
    for p in polys {
        let [lon, lat] = p.centroid();
        p.country = adm0
            .sample(lon, lat)
            .filter(|&v| !adm0.is_nodata(v))
            .and_then(|v| table.alpha3(v))
            .map(str::to_string);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridSpec;

    fn classes(rows: &[&str], west: f64, north: f64, px: f64) -> Raster<u8> {
        let h = rows.len();
        let w = rows[0].len();
        let g = GridSpec::from_origin(west, north, px, w, h).unwrap();
        let data = rows
            .iter()
            .flat_map(|r| {
                r.bytes().map(|b| match b {
                    b'#' => 1,
                    b'+' => 2,
                    _ => 0,
                })
            })
            .collect();
        Raster::new(g, data, Some(255)).unwrap()
    }

    #[test]
    fn ids_are_stable_and_distinct() {
        assert_eq!(field_id("t1", 3, 2024), field_id("t1", 3, 2024));
        assert_ne!(field_id("t1", 3, 2024), field_id("t1", 3, 2025));
        assert_ne!(field_id("t1", 3, 2024), field_id("t1", 4, 2024));
        assert_eq!(field_id("t", 1, 1).len(), 16);
    }

    #[test]
    fn pixel_area_at_equator_and_latitude() {
        let px = 1.0 / 12_000.0;
        // one 10 m pixel at the equator
        let eq = Polygon::rect(0.0, 0.0, px, px);
        let side = EARTH_RADIUS_M * px.to_radians();
        assert!((polygon_area_m2(&eq) / (side * side) - 1.0).abs() < 1e-6);
        assert!((polygon_perimeter_m(&eq) / (4.0 * side) - 1.0).abs() < 1e-6);
        // at 60 degrees the east-west extent halves
        let hi = Polygon::rect(0.0, 60.0, px, 60.0 + px);
        assert!((polygon_area_m2(&hi) / polygon_area_m2(&eq) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn extraction_applies_min_area() {
        let r = classes(&["##..#", "##..#", ".....", "###+.", "....."], 28.0, -14.0, 1e-3);
        let f = extract_fields(&r, 4, "tile", 2025);
        let counts: Vec<u64> = f.iter().map(|p| p.pixel_count).collect();
        assert_eq!(counts, vec![4]);
        let f3 = extract_fields(&r, 3, "tile", 2025);
        assert_eq!(f3.iter().map(|p| p.pixel_count).collect::<Vec<_>>(), vec![4, 3]);
        for p in &f3 {
            assert!(p.area_m2 > 0.0);
            assert_eq!(p.exterior.first(), p.exterior.last());
        }
    }

    #[test]
    fn country_by_centroid() {
        let g = GridSpec::from_origin(0.0, 2.0, 1.0, 2, 2).unwrap();
        let adm0 = Raster::new(g, vec![894, 454, -1, 894], Some(-1)).unwrap();
        let table = CountryTable::default();
        let mk = |x0: f64, y0: f64, x1: f64, y1: f64| {
            let p = Polygon::rect(x0, y0, x1, y1);
            FieldPolygon {
                id: String::new(),
                exterior: p.exterior,
                holes: vec![],
                pixel_count: 4,
                area_m2: 1.0,
                perimeter_m: 1.0,
                country: Some("XXX".into()),
                confidence: None,
                year: 2025,
                tile_id: String::new(),
            }
        };
        let mut polys = vec![
            mk(0.2, 1.2, 0.8, 1.8),
            // straddles the ZMB/MWI border; centroid x = 1.1
            mk(0.5, 1.2, 1.7, 1.8),
            mk(0.2, 0.2, 0.8, 0.8),
            mk(5.0, 5.0, 6.0, 6.0),
        ];
        assign_country(&mut polys, &adm0, &table);
        let got: Vec<Option<&str>> = polys.iter().map(|p| p.country.as_deref()).collect();
        assert_eq!(got, vec![Some("ZMB"), Some("MWI"), None, None]);
    }

    #[test]
    fn country_table_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "code,iso3\n894,ZMB\n454,MWI\n").unwrap();
        let t = CountryTable::load(&path).unwrap();
        assert_eq!(t.alpha3(454), Some("MWI"));
        assert_eq!(t.code_of("ZMB"), Some(894));
        std::fs::write(&path, "894,ZMB\nabc,MWI\n").unwrap();
        assert!(matches!(CountryTable::load(&path), Err(Error::Parse { .. })));
    }
}
