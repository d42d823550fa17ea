//! Pipeline configuration file (TOML).
//!
//! Relative paths are resolved against the directory holding the file.
//! Command-line flags are applied on top of the loaded values.

use std::path::{Path, PathBuf};

use fieldmap_core::composite::{DEFAULT_BRACKET_DAYS, DEFAULT_CLOUD_THRESHOLD};
use fieldmap_core::confidence::{
    CropFilter, ForestParams, ModelKind, ModelSpec, DBSCAN_EPS_DEG, DBSCAN_MIN_SAMPLES, DEFAULT_LAMBDA,
    DEFAULT_SUBSAMPLE_CAP, HULL_BUFFER_DEG, LOCO_MIN_PER_CLASS,
};
use fieldmap_core::evaluate::{MetricCrs, PositiveClasses, DEFAULT_SAMPLE_SIZE};
use fieldmap_core::indicators::FeatureSet;
use fieldmap_core::stitch::{Backend, DEFAULT_BOA_OFFSET};
use fieldmap_core::vectorize::DEFAULT_MIN_PIXELS;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the default worker count.
pub const PARALLELISM_ENV: &str = "FIELDMAP_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub year: i32,
    /// Worker threads; unset falls back to the environment, then to the
    /// number of CPUs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    pub paths: Paths,
    #[serde(default)]
    pub tiles: Vec<TileConfig>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub stitch: StitchConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sos: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adm0: Option<PathBuf>,
    /// CSV of ISO numeric code to alpha-3; the built-in table otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country_table: Option<PathBuf>,
    /// Directory of `<layer>.tif` cropland products.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_dir: Option<PathBuf>,
    /// GeoJSON ground-truth field polygons with a country property.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    /// GeoJSON reference parcels with a crop-code property.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parcels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_allowlist: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileConfig {
    pub id: String,
    /// Scene manifest CSV (`path,date,cloud_fraction,scl_path`).
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub cloud: f64,
    pub bracket_days: i64,
    /// Confidence levels used for filtering and filtered evaluation.
    pub confidence: Vec<f64>,
    pub min_pixels: usize,
    pub crop_filter: CropFilter,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            cloud: DEFAULT_CLOUD_THRESHOLD,
            bracket_days: DEFAULT_BRACKET_DAYS,
            confidence: vec![0.4, 0.5],
            min_pixels: DEFAULT_MIN_PIXELS,
            crop_filter: CropFilter::Le2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { master: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchConfig {
    pub backend: Backend,
    pub boa_offset: i32,
    pub upper_clamp: f64,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig {
            backend: Backend::Synthetic,
            boa_offset: DEFAULT_BOA_OFFSET,
            upper_clamp: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub feature_set: FeatureSet,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub lambda: f64,
    pub folds: usize,
    pub subsample_cap: usize,
    pub loco_min_per_class: usize,
    pub dbscan_eps_deg: f64,
    pub dbscan_min_samples: usize,
    pub hull_buffer_deg: f64,
    /// Ground-truth property naming the polygon's country (alpha-3).
    pub country_property: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let f = ForestParams::default();
        ModelConfig {
            kind: ModelKind::RandomForest,
            feature_set: FeatureSet::ModelOnly,
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            min_leaf: f.min_leaf,
            lambda: DEFAULT_LAMBDA,
            folds: 5,
            subsample_cap: DEFAULT_SUBSAMPLE_CAP,
            loco_min_per_class: LOCO_MIN_PER_CLASS,
            dbscan_eps_deg: DBSCAN_EPS_DEG,
            dbscan_min_samples: DBSCAN_MIN_SAMPLES,
            hull_buffer_deg: HULL_BUFFER_DEG,
            country_property: "country".into(),
        }
    }
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            forest: ForestParams {
                n_trees: self.n_trees,
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
            },
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub positive: PositiveClasses,
    pub crop_column: String,
    pub sample_size: usize,
    pub regions: Vec<Region>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            positive: PositiveClasses::FieldAndBoundary,
            crop_column: "crop_code".into(),
            sample_size: DEFAULT_SAMPLE_SIZE,
            regions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub name: String,
    /// ISO alpha-3 code, matched against ADM0 and polygon country.
    pub country: String,
    /// Projected CRS for shape statistics.
    pub epsg: MetricCrs,
}

impl PipelineConfig {
    /// Smallest valid configuration writing to `output`.
    pub fn minimal(output: impl Into<PathBuf>, year: i32) -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            year,
            parallelism: None,
            paths: Paths {
                output: output.into(),
                ..Paths::default()
            },
            tiles: Vec::new(),
            thresholds: Thresholds::default(),
            seeds: Seeds::default(),
            stitch: StitchConfig::default(),
            model: ModelConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Failure::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Read, validate and resolve relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        abs(&mut p.output);
        for o in [
            &mut p.sos,
            &mut p.eos,
            &mut p.adm0,
            &mut p.country_table,
            &mut p.consensus_dir,
            &mut p.ground_truth,
            &mut p.parcels,
            &mut p.crop_allowlist,
        ]
        .into_iter()
        .flatten()
        {
            abs(o);
        }
        for t in &mut self.tiles {
            abs(&mut t.manifest);
        }
        if let Backend::File(f) = &mut self.stitch.backend {
            abs(f);
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |m: String| Err(Failure::Usage(format!("config: {m}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let t = &self.thresholds;
        if !(t.cloud > 0.0 && t.cloud <= 1.0) {
            return bad(format!("thresholds.cloud {} outside (0, 1]", t.cloud));
        }
        if t.bracket_days < 0 {
            return bad("thresholds.bracket_days must be non-negative".into());
        }
        if let Some(c) = t.confidence.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return bad(format!("confidence threshold {c} outside [0, 1]"));
        }
        if t.min_pixels == 0 {
            return bad("thresholds.min_pixels must be at least 1".into());
        }
        let m = &self.model;
        if m.folds < 2 {
            return bad("model.folds must be at least 2".into());
        }
        if m.n_trees == 0 || m.max_depth == 0 || m.min_leaf == 0 {
            return bad("model.n_trees, max_depth and min_leaf must be positive".into());
        }
        if !(m.lambda >= 0.0) {
            return bad("model.lambda must be non-negative".into());
        }
        if !(m.dbscan_eps_deg > 0.0) || m.dbscan_min_samples == 0 || !(m.hull_buffer_deg >= 0.0) {
            return bad("invalid DBSCAN or hull parameters".into());
        }
        if !(self.stitch.upper_clamp > 0.0) {
            return bad("stitch.upper_clamp must be positive".into());
        }
        if self.parallelism == Some(0) {
            return bad("parallelism must be at least 1".into());
        }
        let mut ids: Vec<&str> = self.tiles.iter().map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate tile id {}", w[0]));
        }
        if let Some(id) = ids.iter().find(|id| id.is_empty() || id.contains(['/', '\\'])) {
            return bad(format!("tile id {id:?} is not a plain name"));
        }
        Ok(())
    }

    /// Hash of everything that influences outputs. The output directory and
    /// the worker count are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.parallelism = None;
        c.paths.output = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes to JSON");
        hex(&Sha256::digest(&json))
    }

    pub fn threads(&self) -> usize {
        self.parallelism
            .or_else(|| std::env::var(PARALLELISM_ENV).ok()?.parse().ok().filter(|&n| n > 0))
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> PipelineConfig {
        let mut c = PipelineConfig::minimal("out", 2024);
        c.parallelism = Some(3);
        c.paths.sos = Some("cal/sos.tif".into());
        c.paths.consensus_dir = Some("/data/consensus".into());
        c.tiles = vec![
            TileConfig { id: "a".into(), manifest: "a.csv".into() },
            TileConfig { id: "b".into(), manifest: "b.csv".into() },
        ];
        c.thresholds.confidence = vec![0.0, 0.4, 0.55];
        c.stitch.backend = Backend::File("m.json".into());
        c.model.kind = ModelKind::LogisticRegression;
        c.model.feature_set = FeatureSet::All;
        c.evaluate.regions = vec![Region {
            name: "Zambia".into(),
            country: "ZMB".into(),
            epsg: MetricCrs::from_epsg(32735).unwrap(),
        }];
        c
    }

    #[test]
    fn round_trips_through_toml() {
        let c = full();
        assert_eq!(PipelineConfig::parse(&c.to_toml()).unwrap(), c);
        let m = PipelineConfig::minimal("x", 2025);
        assert_eq!(PipelineConfig::parse(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn defaults_fill_missing_tables() {
        let c = PipelineConfig::parse("schema_version = 1\nyear = 2024\n[paths]\noutput = \"o\"\n").unwrap();
        assert_eq!(c.thresholds.cloud, 0.20);
        assert_eq!(c.thresholds.min_pixels, 4);
        assert_eq!(c.thresholds.crop_filter, CropFilter::Le2);
        assert_eq!(c.thresholds.confidence, vec![0.4, 0.5]);
        assert_eq!(c.model.n_trees, 200);
        assert_eq!(c.stitch.boa_offset, -1000);
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut c = full();
        c.thresholds.cloud = 1.5;
        assert!(matches!(PipelineConfig::parse(&c.to_toml()), Err(Failure::Usage(_))));
        let mut c = full();
        c.thresholds.confidence.push(1.2);
        assert!(c.validate().is_err());
        let mut c = full();
        c.schema_version = 2;
        assert!(c.validate().is_err());
        let mut c = full();
        c.tiles[1].id = "a".into();
        assert!(c.validate().is_err());
        assert!(PipelineConfig::parse("schema_version = 1\nyear = 1\nbogus = 3\n[paths]\noutput = \"o\"\n").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, full().to_toml()).unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.paths.output, dir.path().join("out"));
        assert_eq!(c.paths.sos.unwrap(), dir.path().join("cal/sos.tif"));
        assert_eq!(c.paths.consensus_dir.unwrap(), PathBuf::from("/data/consensus"));
        assert_eq!(c.tiles[0].manifest, dir.path().join("a.csv"));
        assert_eq!(c.stitch.backend, Backend::File(dir.path().join("m.json")));
    }

    #[test]
    fn hash_ignores_output_and_threads() {
        let a = full();
        let mut b = full();
        b.paths.output = "elsewhere".into();
        b.parallelism = Some(8);
        assert_eq!(a.hash(), b.hash());
        b.seeds.master = 7;
        assert_ne!(a.hash(), b.hash());
    }
}
