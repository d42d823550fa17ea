//! Reference parcels from GeoJSON and seasonal-crop filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::geom::{Point, Polygon, Ring};
use crate::raster::{rasterize_polygons, GridSpec, Raster, RasterizeMode};

#[derive(Debug, Clone, PartialEq)]
pub struct Parcel {
    pub crop_code: Option<String>,
    pub polygons: Vec<Polygon>,
}

fn parse_ring(v: &Value) -> Option<Ring> {
    v.as_array()?
        .iter()
        .map(|c| {
            let c = c.as_array()?;
            Some([c.first()?.as_f64()?, c.get(1)?.as_f64()?])
        })
        .collect::<Option<Vec<Point>>>()
}

fn parse_polygon(v: &Value) -> Option<Polygon> {
    let mut rings = v.as_array()?.iter().map(parse_ring).collect::<Option<Vec<_>>>()?;
    if rings.is_empty() {
        return None;
    }
    let ext = rings.remove(0);
    Some(Polygon::new(ext, rings))
}

fn parse_geometry(g: &Value) -> std::result::Result<Vec<Polygon>, String> {
    let coords = &g["coordinates"];
    match g["type"].as_str() {
        Some("Polygon") => parse_polygon(coords).map(|p| vec![p]).ok_or_else(|| "bad Polygon coordinates".into()),
        Some("MultiPolygon") => coords
            .as_array()
            .and_then(|ps| ps.iter().map(parse_polygon).collect::<Option<Vec<_>>>())
            .ok_or_else(|| "bad MultiPolygon coordinates".into()),
        other => Err(format!("unsupported geometry type {other:?}")),
    }
}

fn code_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parse a FeatureCollection of Polygon/MultiPolygon features; the crop
/// code is read from `crop_column` (string or number). Features with null
/// geometry are skipped.
pub fn parse_parcels(doc: &Value, crop_column: &str) -> std::result::Result<Vec<Parcel>, String> {
    let features = doc["features"].as_array().ok_or("missing features array")?;
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        if f["geometry"].is_null() {
            continue;
        }
        let polygons = parse_geometry(&f["geometry"]).map_err(|e| format!("feature {i}: {e}"))?;
        out.push(Parcel {
            crop_code: code_string(&f["properties"][crop_column]),
            polygons,
        });
    }
    Ok(out)
}

pub fn read_parcels(path: impl AsRef<Path>, crop_column: &str) -> Result<Vec<Parcel>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::parse("GeoJSON", path, e))?;
    parse_parcels(&doc, crop_column).map_err(|m| Error::parse("GeoJSON", path, m))
}

/// Seasonal crop codes per country (alpha-3), loaded from `country,crop_code` rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CropAllowlist(pub BTreeMap<String, BTreeSet<String>>);

impl CropAllowlist {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::parse("CSV", path, e))?;
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::parse("CSV", path, e))?;
            match (rec.get(0), rec.get(1)) {
                (Some(c), Some(code)) if !c.is_empty() && !code.is_empty() => {
                    map.entry(c.to_string()).or_default().insert(code.to_string());
                }
                _ => return Err(Error::parse("CSV", path, format!("expected country,crop_code in {rec:?}"))),
            }
        }
        Ok(CropAllowlist(map))
    }

    pub fn codes(&self, country: &str) -> Option<&BTreeSet<String>> {
        self.0.get(country)
    }
}

/// Parcels whose crop code is on the list; parcels without a code are dropped.
pub fn filter_parcels(parcels: &[Parcel], codes: &BTreeSet<String>) -> Vec<Parcel> {
    parcels
        .iter()
        .filter(|p| p.crop_code.as_ref().is_some_and(|c| codes.contains(c)))
        .cloned()
        .collect()
}

/// 0/1 reference mask by pixel-centre rasterization.
pub fn reference_mask(parcels: &[Parcel], grid: &GridSpec) -> Raster<u8> {
    let polys: Vec<Polygon> = parcels.iter().flat_map(|p| p.polygons.iter().cloned()).collect();
    rasterize_polygons(&polys, grid, RasterizeMode::Center)
}
