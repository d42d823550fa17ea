//! fiboa-style GeoParquet for field polygons.
//!
//! Columns: `id`, `geometry` (WKB Polygon, lon/lat), `area` (hectares),
//! `perimeter` (metres), `country` (nullable ISO alpha-3), `confidence`
//! (nullable), `determination_datetime` (UTC millisecond timestamp at
//! 1 January of the map year), plus `pixel_count` and `tile_id`. File
//! metadata carries the GeoParquet `geo` block and a `fiboa` version block.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use parquet::basic::Compression;
use parquet::data_type::{ByteArray, ByteArrayType, DoubleType, Int64Type};
use parquet::file::metadata::KeyValue;
use parquet::file::properties::WriterProperties;
use parquet::file::reader::{FileReader, SerializedFileReader};
use parquet::file::writer::SerializedFileWriter;
use parquet::record::Field;
use parquet::schema::parser::parse_message_type;
use serde_json::json;

use super::fields::FieldPolygon;
use super::wkb::{decode_polygon, encode_polygon};
use crate::error::{Error, Result};

pub const FIBOA_VERSION: &str = "0.2.0";
pub const GEOPARQUET_VERSION: &str = "1.1.0";

const SCHEMA: &str = "
message fields {
    REQUIRED BYTE_ARRAY id (STRING);
    REQUIRED BYTE_ARRAY geometry;
    REQUIRED DOUBLE area;
    REQUIRED DOUBLE perimeter;
    OPTIONAL BYTE_ARRAY country (STRING);
    OPTIONAL DOUBLE confidence;
    REQUIRED INT64 determination_datetime (TIMESTAMP(MILLIS,true));
    REQUIRED INT64 pixel_count;
    REQUIRED BYTE_ARRAY tile_id (STRING);
}";

const ROW_GROUP: usize = 65_536;

fn year_start_millis(year: i32) -> i64 {
    NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("valid year")
        .and_hms_opt(0, 0, 0)
        .unwrap()
        .and_utc()
        .timestamp_millis()
}

fn year_of_millis(ms: i64) -> Option<i32> {
    chrono::DateTime::from_timestamp_millis(ms).map(|d| d.year())
}

fn geo_metadata(polys: &[FieldPolygon]) -> String {
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in polys.iter().flat_map(|f| f.exterior.iter()) {
        bbox = [bbox[0].min(p[0]), bbox[1].min(p[1]), bbox[2].max(p[0]), bbox[3].max(p[1])];
    }
    let mut col = json!({
        "encoding": "WKB",
        "geometry_types": ["Polygon"],
        "orientation": "counterclockwise",
        "edges": "planar",
    });
    if !polys.is_empty() {
        col["bbox"] = json!(bbox);
    }
    json!({
        "version": GEOPARQUET_VERSION,
        "primary_column": "geometry",
        "columns": { "geometry": col },
    })
    .to_string()
}

/// Write polygons to a GeoParquet file (uncompressed, deterministic bytes).
pub fn write_fields(polys: &[FieldPolygon], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pq = |e| Error::Parquet {
        path: path.to_path_buf(),
        source: e,
    };
    let schema = Arc::new(parse_message_type(SCHEMA).map_err(pq)?);
    let props = WriterProperties::builder()
        .set_compression(Compression::UNCOMPRESSED)
        .set_created_by(format!("fieldmap {}", env!("CARGO_PKG_VERSION")))
        .set_key_value_metadata(Some(vec![
            KeyValue::new("geo".to_string(), geo_metadata(polys)),
            KeyValue::new("fiboa".to_string(), json!({ "fiboa_version": FIBOA_VERSION }).to_string()),
        ]))
        .build();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = SerializedFileWriter::new(file, schema, Arc::new(props)).map_err(pq)?;
    for chunk in polys.chunks(ROW_GROUP) {
        let mut rg = writer.next_row_group().map_err(pq)?;
        let mut idx = 0;
        while let Some(mut col) = rg.next_column().map_err(pq)? {
            let strings = |f: &dyn Fn(&FieldPolygon) -> &str| -> Vec<ByteArray> {
                chunk.iter().map(|p| ByteArray::from(f(p))).collect()
            };
            match idx {
                0 => {
                    col.typed::<ByteArrayType>()
                        .write_batch(&strings(&|p| &p.id), None, None)
                        .map_err(pq)?;
                }
                1 => {
                    let geoms: Vec<ByteArray> = chunk
                        .iter()
                        .map(|p| ByteArray::from(encode_polygon(&p.exterior, &p.holes)))
                        .collect();
                    col.typed::<ByteArrayType>().write_batch(&geoms, None, None).map_err(pq)?;
                }
                2 | 3 => {
                    let v: Vec<f64> = chunk
                        .iter()
                        .map(|p| if idx == 2 { p.area_ha() } else { p.perimeter_m })
                        .collect();
                    col.typed::<DoubleType>().write_batch(&v, None, None).map_err(pq)?;
                }
                4 => {
                    let def: Vec<i16> = chunk.iter().map(|p| i16::from(p.country.is_some())).collect();
                    let v: Vec<ByteArray> = chunk
                        .iter()
                        .filter_map(|p| p.country.as_deref().map(ByteArray::from))
                        .collect();
                    col.typed::<ByteArrayType>().write_batch(&v, Some(&def), None).map_err(pq)?;
                }
                5 => {
                    let def: Vec<i16> = chunk.iter().map(|p| i16::from(p.confidence.is_some())).collect();
                    let v: Vec<f64> = chunk.iter().filter_map(|p| p.confidence).collect();
                    col.typed::<DoubleType>().write_batch(&v, Some(&def), None).map_err(pq)?;
                }
                6 | 7 => {
                    let v: Vec<i64> = chunk
                        .iter()
                        .map(|p| {
                            if idx == 6 {
                                year_start_millis(p.year)
                            } else {
                                p.pixel_count as i64
                            }
                        })
                        .collect();
                    col.typed::<Int64Type>().write_batch(&v, None, None).map_err(pq)?;
                }
                _ => {
                    col.typed::<ByteArrayType>()
                        .write_batch(&strings(&|p| &p.tile_id), None, None)
                        .map_err(pq)?;
                }
            }
            col.close().map_err(pq)?;
            idx += 1;
        }
        rg.close().map_err(pq)?;
    }
    writer.close().map_err(pq)?;
    Ok(())
}

/// Read polygons written by [`write_fields`]. Missing columns, wrong types
/// and undecodable geometry are reported as parse errors naming the row.
pub fn read_fields(path: impl AsRef<Path>) -> Result<Vec<FieldPolygon>> {
    let path = path.as_ref();
    let bad = |msg: String| Error::parse("GeoParquet", path, msg);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = SerializedFileReader::new(file).map_err(|e| bad(e.to_string()))?;
    let has_geo = reader
        .metadata()
        .file_metadata()
        .key_value_metadata()
        .is_some_and(|kv| kv.iter().any(|k| k.key == "geo"));
    if !has_geo {
        return Err(bad("no 'geo' metadata block".into()));
    }
    let mut out = Vec::with_capacity(reader.metadata().file_metadata().num_rows() as usize);
    for (i, row) in reader.get_row_iter(None).map_err(|e| bad(e.to_string()))?.enumerate() {
        let row = row.map_err(|e| bad(format!("row {i}: {e}")))?;
        let mut id = None;
        let mut geom = None;
        let mut area = None;
        let mut perimeter = None;
        let mut country = None;
        let mut confidence = None;
        let mut year = None;
        let mut pixel_count = None;
        let mut tile_id = None;
        for (name, f) in row.get_column_iter() {
            match (name.as_str(), f) {
                ("id", Field::Str(s)) => id = Some(s.clone()),
                ("geometry", Field::Bytes(b)) => {
                    geom = Some(decode_polygon(b.data()).map_err(|e| bad(format!("row {i}: geometry {e}")))?)
                }
                ("area", Field::Double(v)) => area = Some(*v),
                ("perimeter", Field::Double(v)) => perimeter = Some(*v),
                ("country", Field::Str(s)) => country = Some(s.clone()),
                ("confidence", Field::Double(v)) => confidence = Some(*v),
                ("determination_datetime", Field::TimestampMillis(ms)) => year = year_of_millis(*ms),
                ("pixel_count", Field::Long(v)) => pixel_count = Some(*v as u64),
                ("tile_id", Field::Str(s)) => tile_id = Some(s.clone()),
                (_, Field::Null) => {}
                (n, other) => return Err(bad(format!("row {i}: column {n} has unexpected value {other}"))),
            }
        }
        let missing = |col: &str| bad(format!("row {i}: missing {col}"));
        let (exterior, holes) = geom.ok_or_else(|| missing("geometry"))?;
        out.push(FieldPolygon {
            id: id.ok_or_else(|| missing("id"))?,
            exterior,
            holes,
            pixel_count: pixel_count.ok_or_else(|| missing("pixel_count"))?,
            area_m2: area.ok_or_else(|| missing("area"))? * 10_000.0,
            perimeter_m: perimeter.ok_or_else(|| missing("perimeter"))?,
            country,
            confidence,
            year: year.ok_or_else(|| missing("determination_datetime"))?,
            tile_id: tile_id.ok_or_else(|| missing("tile_id"))?,
        });
    }
    Ok(out)
}
