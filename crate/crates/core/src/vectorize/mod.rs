//! Field-interior components to attributed polygons.
//!
//! Components are 4-connected. Rings follow pixel edges with the field on
//! the left, so exteriors are counter-clockwise and holes clockwise in
//! lon/lat. Enclosed background is kept as holes.

mod components;
mod fields;
mod geojson;
mod geoparquet;
mod trace;
pub mod wkb;

pub use components::{connected_components, filter_min_area, Components};
pub use fields::{
    assign_country, extract_fields, field_id, polygon_area_m2, polygon_perimeter_m, ring_area_m2, ring_length_m,
    to_field_polygon, CountryTable, FieldPolygon, DEFAULT_MIN_PIXELS, EARTH_RADIUS_M,
};
pub use geojson::{to_geojson, write_geojson};
pub use geoparquet::{read_fields, write_fields, FIBOA_VERSION, GEOPARQUET_VERSION};
pub use trace::{pixel_area, trace_polygons, TracedPolygon};
