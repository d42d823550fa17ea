//! Confidence-model training, validation and products.

mod dbscan;
mod forest;
mod logreg;
mod model;
mod products;
mod training;
mod validate;

pub use dbscan::{coverage_hulls, dbscan, CoverageHull, DBSCAN_EPS_DEG, DBSCAN_MIN_SAMPLES, HULL_BUFFER_DEG, NOISE};
pub use forest::{train_forest, Forest, ForestParams, Node, Tree};
pub use logreg::{train_logreg, LogisticModel, DEFAULT_LAMBDA};
pub use model::{artifact_hash, ConfidenceModel, ModelKind, ModelSpec, Predictor};
pub use products::{
    apply_confidence, attach_confidence, confidence_at, retention_curve, retention_from_scores, threshold_density, threshold_polygons,
    RetentionRow, DEFAULT_THRESHOLDS,
};
pub use training::{balanced_subsample, build_training_set, design, gt_cell_raster, CropFilter, TrainingCell, DEFAULT_SUBSAMPLE_CAP};
pub use validate::{
    auc, binary_metrics, cross_validate, loco, stratified_folds, BinaryMetrics, CvReport, LocoReport, DECISION_THRESHOLD,
    LOCO_MIN_PER_CLASS,
};
