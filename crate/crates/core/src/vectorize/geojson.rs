use std::path::Path;

use serde_json::{json, Value};

use super::fields::FieldPolygon;
use crate::error::{Error, Result};

/// RFC 7946 FeatureCollection with the same attributes as the GeoParquet
/// columns (area in hectares).
pub fn to_geojson(polys: &[FieldPolygon]) -> Value {
    let features: Vec<Value> = polys
        .iter()
        .map(|p| {
            let rings: Vec<&Vec<[f64; 2]>> = std::iter::once(&p.exterior).chain(&p.holes).collect();
            json!({
                "type": "Feature",
                "id": p.id,
                "geometry": { "type": "Polygon", "coordinates": rings },
                "properties": {
                    "area": p.area_ha(),
                    "perimeter": p.perimeter_m,
                    "country": p.country,
                    "confidence": p.confidence,
                    "determination_datetime": format!("{}-01-01T00:00:00Z", p.year),
                    "pixel_count": p.pixel_count,
                    "tile_id": p.tile_id,
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn write_geojson(polys: &[FieldPolygon], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&to_geojson(polys)).expect("JSON values serialize");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;

    #[test]
    fn feature_shape() {
        let p = Polygon::rect(1.0, 2.0, 1.5, 2.5);
        let f = FieldPolygon {
            id: "abc".into(),
            exterior: p.exterior,
            holes: vec![],
            pixel_count: 9,
            area_m2: 25_000.0,
            perimeter_m: 600.0,
            country: None,
            confidence: Some(0.75),
            year: 2024,
            tile_id: "t".into(),
        };
        let v = to_geojson(&[f]);
        let feat = &v["features"][0];
        assert_eq!(feat["geometry"]["coordinates"][0][2], json!([1.5, 2.5]));
        assert_eq!(feat["properties"]["area"], json!(2.5));
        assert!(feat["properties"]["country"].is_null());
        assert_eq!(feat["properties"]["determination_datetime"], "2024-01-01T00:00:00Z");
    }
}
