//! Pixel-level accuracy against reference parcels, recall inside coverage
//! hulls, and polygon shape statistics in projected metric coordinates.

mod parcels;
mod pixels;
pub mod projection;
mod shapes;

pub use parcels::{filter_parcels, parse_parcels, read_parcels, reference_mask, CropAllowlist, Parcel};
pub use pixels::{
    confidence_mask_10m, format_reports, hull_confusion, hull_recall, mask_predictions, pixel_confusion, pixel_metrics, pooled_metrics,
    Confusion, EvaluationReport, PositiveClasses, TileInputs, Variant,
};
pub use projection::MetricCrs;
pub use shapes::{
    distribution_summary, median, planar_shape_stats, sample_indices, shape_metrics, DistributionSummary, ShapeStats,
    DEFAULT_SAMPLE_SIZE,
};
