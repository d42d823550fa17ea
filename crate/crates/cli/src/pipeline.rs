//! Config-driven execution over the output layout:
//!
//! ```text
//! <out>/manifest.json
//! <out>/tiles/<id>/{planting,harvest,probs,classes}.tif
//! <out>/tiles/<id>/fields.parquet, cells.csv, indicators/, confidence.tif
//! <out>/tiles/<id>/filtered/fields_t<t>.parquet
//! <out>/model/{model.fmcm, cv.json, cv.txt, loco.json, loco.txt}
//! <out>/fields.parquet, <out>/filtered/fields_t<t>.parquet
//! <out>/reports/{retention.csv, pixels.*, recall.csv, shapes.csv, distribution.*}
//! ```
//!
//! Tiles are processed on a bounded worker pool, stages within a tile in
//! order. Merged products are rebuilt from the per-tile files, so a resumed
//! run never duplicates polygons.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use fieldmap_core::confidence::{ConfidenceModel, DEFAULT_THRESHOLDS};
use fieldmap_core::confidence::attach_confidence;
use fieldmap_core::raster::cog::read_raster;
use fieldmap_core::vectorize::{read_fields, CountryTable, FieldPolygon};
use rayon::prelude::*;
use tracing::{info, warn};

use crate::artifacts::{Recorder, RunManifest, StageStatus};
use crate::config::{PipelineConfig, TileConfig};
use crate::failure::Failure;
use crate::stages::{self, EvalRegion, EvalTile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileStage {
    Composite,
    Stitch,
    Vectorize,
    Indicators,
    Confidence,
    Filter,
}

impl TileStage {
    pub const PRODUCTION: [TileStage; 4] = [TileStage::Composite, TileStage::Stitch, TileStage::Vectorize, TileStage::Indicators];
    pub const SCORING: [TileStage; 2] = [TileStage::Confidence, TileStage::Filter];

    pub fn name(self) -> &'static str {
        match self {
            TileStage::Composite => "composite",
            TileStage::Stitch => "stitch",
            TileStage::Vectorize => "vectorize",
            TileStage::Indicators => "indicators",
            TileStage::Confidence => "confidence",
            TileStage::Filter => "filter",
        }
    }
}

/// Outcome of running stages over tiles.
#[derive(Debug, Default)]
pub struct TileRun {
    pub failed: Vec<String>,
    /// At least one stage actually executed (was not skipped as done).
    pub executed: bool,
}

pub struct Executor {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    rec: Recorder,
    countries: CountryTable,
    manifest: Mutex<RunManifest>,
    manifest_path: PathBuf,
    pool: rayon::ThreadPool,
}

impl Executor {
    pub fn new(cfg: PipelineConfig) -> Result<Self, Failure> {
        cfg.validate()?;
        let out = cfg.paths.output.clone();
        fs::create_dir_all(&out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
        let hash = cfg.hash();
        let manifest_path = out.join("manifest.json");
        let manifest = RunManifest::load_or_new(&manifest_path, &hash);
        let countries = stages::load_country_table(cfg.paths.country_table.as_deref())?;
        let threads = cfg.threads();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Failure::Usage(format!("cannot start {threads} workers: {e}")))?;
        info!(threads, config_hash = %hash, output = %out.display(), "executor ready");
        Ok(Executor {
            rec: Recorder::new(hash, cfg.seeds.master),
            cfg,
            out,
            countries,
            manifest: Mutex::new(manifest),
            manifest_path,
            pool,
        })
    }

    pub fn manifest_path(&self) -> &Path {
        &self.manifest_path
    }

    pub fn tile_dir(&self, id: &str) -> PathBuf {
        self.out.join("tiles").join(id)
    }

    fn model_dir(&self) -> PathBuf {
        self.out.join("model")
    }

    fn reports_dir(&self) -> PathBuf {
        self.out.join("reports")
    }

    pub fn model_path(&self) -> PathBuf {
        self.model_dir().join("model.fmcm")
    }

    pub fn filtered_name(t: f64) -> String {
        format!("fields_t{}.parquet", stages::threshold_label(t))
    }

    fn relative(&self, paths: &[PathBuf]) -> Vec<PathBuf> {
        paths
            .iter()
            .map(|p| p.strip_prefix(&self.out).map(Path::to_path_buf).unwrap_or_else(|_| p.clone()))
            .collect()
    }

    fn status(&self, result: &Result<Vec<PathBuf>, Failure>) -> StageStatus {
        match result {
            Ok(outputs) => StageStatus::Done { outputs: self.relative(outputs) },
            Err(e) => StageStatus::Failed { message: e.to_string() },
        }
    }

    fn save_manifest(&self, m: &RunManifest) {
        if let Err(e) = m.save(&self.manifest_path) {
            warn!(error = %e, "could not save the run manifest");
        }
    }

    fn select_tiles(&self, only: &[String]) -> Result<Vec<TileConfig>, Failure> {
        if let Some(missing) = only.iter().find(|id| !self.cfg.tiles.iter().any(|t| &t.id == *id)) {
            return Err(Failure::Usage(format!("tile {missing} is not in the configuration")));
        }
        Ok(self
            .cfg
            .tiles
            .iter()
            .filter(|t| only.is_empty() || only.contains(&t.id))
            .cloned()
            .collect())
    }

    // --------------------------------------------------------- tile stages

    fn run_tile_stage(&self, tile: &TileConfig, stage: TileStage) -> Result<Vec<PathBuf>, Failure> {
        let dir = self.tile_dir(&tile.id);
        let id = tile.id.as_str();
        let c = &self.cfg;
        match stage {
            TileStage::Composite => stages::composite_tile(
                &stages::CompositeArgs {
                    manifest: &tile.manifest,
                    sos: c.paths.sos.as_deref(),
                    eos: c.paths.eos.as_deref(),
                    year: c.year,
                    cloud_threshold: c.thresholds.cloud,
                    bracket_days: c.thresholds.bracket_days,
                },
                &dir,
                id,
                &self.rec,
            ),
            TileStage::Stitch => stages::stitch_tile(
                &stages::StitchArgs {
                    planting: &dir.join("planting.tif"),
                    harvest: &dir.join("harvest.tif"),
                    backend: &c.stitch.backend,
                    boa_offset: c.stitch.boa_offset,
                    upper_clamp: c.stitch.upper_clamp,
                },
                &dir,
                id,
                &self.rec,
            ),
            TileStage::Vectorize => {
                let out = dir.join("fields.parquet");
                stages::vectorize_tile(
                    &stages::VectorizeArgs {
                        classes: &dir.join("classes.tif"),
                        min_pixels: c.thresholds.min_pixels,
                        adm0: c.paths.adm0.as_deref(),
                        countries: &self.countries,
                        year: c.year,
                    },
                    &out,
                    id,
                    &self.rec,
                )?;
                Ok(vec![out])
            }
            TileStage::Indicators => {
                let table = stages::indicators_tile(
                    &stages::IndicatorArgs {
                        probs: &dir.join("probs.tif"),
                        classes: &dir.join("classes.tif"),
                        consensus_dir: c.paths.consensus_dir.as_deref(),
                    },
                    &dir,
                    id,
                    &self.rec,
                )?;
                info!(tile = id, cells = table.records.len(), "indicator cells");
                Ok(vec![dir.join("indicators"), dir.join("cells.csv")])
            }
            TileStage::Confidence => {
                let model = ConfidenceModel::load(self.model_path())?;
                let out = dir.join("confidence.tif");
                stages::apply_confidence_tile(&model, &dir.join("cells.csv"), &out, id, &self.rec)?;
                Ok(vec![out])
            }
            TileStage::Filter => {
                let mut outs = Vec::new();
                for &t in &c.thresholds.confidence {
                    let out = dir.join("filtered").join(Self::filtered_name(t));
                    stages::filter_fields(&dir.join("fields.parquet"), &dir.join("confidence.tif"), t, &out, Some(id), &self.rec)?;
                    outs.push(out);
                }
                Ok(outs)
            }
        }
    }

    /// Run `stages` in order for each tile on the worker pool. With `resume`,
    /// stages recorded as done (with outputs present) are skipped until one
    /// has to run; every later stage of that tile then runs too. A failing
    /// stage stops its tile only.
    pub fn run_tiles(&self, stages: &[TileStage], only: &[String], resume: bool) -> Result<TileRun, Failure> {
        let tiles = self.select_tiles(only)?;
        let results: Vec<(String, bool, bool)> = self.pool.install(|| {
            tiles
                .par_iter()
                .map(|tile| {
                    let mut executed = false;
                    for &stage in stages {
                        let done = self.manifest.lock().expect("manifest lock").tile_done(&self.out, &tile.id, stage.name());
                        if resume && !executed && done {
                            info!(tile = %tile.id, stage = stage.name(), "already done, skipped");
                            continue;
                        }
                        executed = true;
                        let result = self.run_tile_stage(tile, stage);
                        let status = self.status(&result);
                        {
                            let mut m = self.manifest.lock().expect("manifest lock");
                            m.set_tile(&tile.id, stage.name(), status);
                            self.save_manifest(&m);
                        }
                        if let Err(e) = result {
                            tracing::error!(tile = %tile.id, stage = stage.name(), error = %e, "tile failed");
                            return (tile.id.clone(), executed, true);
                        }
                    }
                    (tile.id.clone(), executed, false)
                })
                .collect()
        });
        Ok(TileRun {
            failed: results.iter().filter(|r| r.2).map(|r| r.0.clone()).collect(),
            executed: results.iter().any(|r| r.1),
        })
    }

    fn partial(&self, failed: Vec<String>) -> Failure {
        Failure::Partial {
            failed,
            manifest: self.manifest_path.clone(),
        }
    }

    /// Tile stages as a standalone command: always executed.
    pub fn tile_command(&self, stages: &[TileStage], only: &[String]) -> Result<(), Failure> {
        let run = self.run_tiles(stages, only, false)?;
        if run.failed.is_empty() {
            Ok(())
        } else {
            Err(self.partial(run.failed))
        }
    }

    // ------------------------------------------------------- global stages

    /// Run a global stage unless it is recorded as done and `force` is off.
    /// Returns whether it executed.
    fn global_stage<F>(&self, name: &str, force: bool, f: F) -> Result<bool, Failure>
    where
        F: FnOnce() -> Result<Vec<PathBuf>, Failure> + Send,
    {
        if !force && self.manifest.lock().expect("manifest lock").global_done(&self.out, name) {
            info!(stage = name, "already done, skipped");
            return Ok(false);
        }
        let result = self.pool.install(f);
        let status = self.status(&result);
        let mut m = self.manifest.lock().expect("manifest lock");
        m.global.insert(name.to_string(), status);
        self.save_manifest(&m);
        result.map(|_| true)
    }

    fn cell_tables(&self) -> Vec<PathBuf> {
        self.cfg.tiles.iter().map(|t| self.tile_dir(&t.id).join("cells.csv")).collect()
    }

    fn ground_truth(&self) -> Result<&Path, Failure> {
        self.cfg
            .paths
            .ground_truth
            .as_deref()
            .ok_or_else(|| Failure::Usage("paths.ground_truth is required for confidence modelling".into()))
    }

    fn training_args<'a>(&'a self, cells: &'a [PathBuf], gt: &'a Path) -> stages::TrainingArgs<'a> {
        stages::TrainingArgs {
            cell_tables: cells,
            ground_truth: gt,
            model: &self.cfg.model,
            feature_set: self.cfg.model.feature_set,
            filter: self.cfg.thresholds.crop_filter,
            seed: self.cfg.seeds.master,
        }
    }

    pub fn train(&self, force: bool) -> Result<bool, Failure> {
        let gt = self.ground_truth()?;
        let cells = self.cell_tables();
        self.global_stage("confidence-train", force, || {
            Ok(stages::train_confidence(&self.training_args(&cells, gt), &self.model_dir(), &self.rec)?.outputs)
        })
    }

    pub fn loco(&self, force: bool) -> Result<bool, Failure> {
        let gt = self.ground_truth()?;
        let cells = self.cell_tables();
        self.global_stage("confidence-evaluate", force, || {
            Ok(stages::evaluate_confidence(&self.training_args(&cells, gt), &self.model_dir(), &self.rec)?.1)
        })
    }

    fn has_confidence(&self, id: &str) -> bool {
        self.tile_dir(id).join("confidence.tif").exists()
    }

    /// Per-tile fields concatenated in configuration order, with confidence
    /// attached where a tile has been scored.
    fn merged_fields(&self) -> Result<Vec<FieldPolygon>, Failure> {
        let mut all = Vec::new();
        for t in &self.cfg.tiles {
            let dir = self.tile_dir(&t.id);
            let mut polys = read_fields(dir.join("fields.parquet"))?;
            if self.has_confidence(&t.id) {
                attach_confidence(&mut polys, &read_raster::<f32>(dir.join("confidence.tif"))?);
            }
            all.extend(polys);
        }
        Ok(all)
    }

    pub fn merge_fields(&self, force: bool) -> Result<bool, Failure> {
        self.global_stage("merge-fields", force, || {
            let out = self.out.join("fields.parquet");
            let all = self.merged_fields()?;
            stages::write_field_file(&all, &out, "merge", None, &self.rec)?;
            info!(fields = all.len(), "merged fields");
            Ok(vec![out])
        })
    }

    pub fn merge_filtered(&self, force: bool) -> Result<bool, Failure> {
        self.global_stage("merge-filtered", force, || {
            let mut outs = Vec::new();
            for &t in &self.cfg.thresholds.confidence {
                let name = Self::filtered_name(t);
                let mut all = Vec::new();
                for tile in &self.cfg.tiles {
                    all.extend(read_fields(self.tile_dir(&tile.id).join("filtered").join(&name))?);
                }
                let out = self.out.join("filtered").join(&name);
                stages::write_field_file(&all, &out, "merge", None, &self.rec)?;
                outs.push(out);
            }
            Ok(outs)
        })
    }

    pub fn retention(&self, force: bool) -> Result<bool, Failure> {
        self.global_stage("retention", force, || {
            let pairs: Vec<(PathBuf, PathBuf)> = self
                .cfg
                .tiles
                .iter()
                .map(|t| {
                    let d = self.tile_dir(&t.id);
                    (d.join("fields.parquet"), d.join("confidence.tif"))
                })
                .collect();
            let out = self.reports_dir().join("retention.csv");
            stages::retention(&pairs, &DEFAULT_THRESHOLDS, &out, &self.rec)?;
            Ok(vec![out])
        })
    }

    fn regions(&self) -> Vec<EvalRegion> {
        self.cfg
            .evaluate
            .regions
            .iter()
            .map(|r| EvalRegion {
                name: r.name.clone(),
                country: r.country.clone(),
                epsg: r.epsg,
            })
            .collect()
    }

    fn eval_tiles(&self) -> Vec<EvalTile> {
        self.cfg
            .tiles
            .iter()
            .map(|t| EvalTile {
                id: t.id.clone(),
                classes: self.tile_dir(&t.id).join("classes.tif"),
                confidence: Some(self.tile_dir(&t.id).join("confidence.tif")).filter(|p| p.exists()),
            })
            .collect()
    }

    pub fn evaluate_pixels(&self, force: bool, thresholds: &[f64]) -> Result<bool, Failure> {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone().ok_or_else(|| Failure::Usage(format!("paths.{what} is required for pixel evaluation")))
        };
        let parcels = need(&self.cfg.paths.parcels, "parcels")?;
        let adm0 = need(&self.cfg.paths.adm0, "adm0")?;
        self.global_stage("evaluate-pixels", force, || {
            let tiles = self.eval_tiles();
            let regions = self.regions();
            let thresholds: Vec<f64> = if tiles.iter().all(|t| t.confidence.is_some()) {
                thresholds.to_vec()
            } else {
                warn!("tiles without confidence rasters; reporting unfiltered metrics only");
                Vec::new()
            };
            let reports = stages::evaluate_pixels(&stages::PixelEvalArgs {
                tiles: &tiles,
                parcels: &parcels,
                crop_column: &self.cfg.evaluate.crop_column,
                allowlist: self.cfg.paths.crop_allowlist.as_deref(),
                adm0: &adm0,
                countries: &self.countries,
                regions: &regions,
                thresholds: &thresholds,
                positive: self.cfg.evaluate.positive,
            })?;
            stages::write_pixel_reports(&reports, &self.reports_dir(), &self.rec)
        })
    }

    pub fn evaluate_recall(&self, force: bool) -> Result<bool, Failure> {
        let gt = self.ground_truth()?;
        self.global_stage("evaluate-recall", force, || {
            let rows = stages::evaluate_recall(&stages::RecallArgs {
                tiles: &self.eval_tiles(),
                ground_truth: gt,
                model: &self.cfg.model,
                regions: &self.regions(),
            })?;
            let out = self.reports_dir().join("recall.csv");
            stages::write_recall_report(&rows, &out, &self.rec)?;
            Ok(vec![out])
        })
    }

    fn field_files(&self) -> Vec<PathBuf> {
        self.cfg.tiles.iter().map(|t| self.tile_dir(&t.id).join("fields.parquet")).collect()
    }

    pub fn evaluate_shapes(&self, force: bool) -> Result<bool, Failure> {
        self.global_stage("evaluate-shapes", force, || {
            let polys = stages::read_field_files(&self.field_files())?;
            let rows = stages::evaluate_shapes(&polys, &self.regions())?;
            let out = self.reports_dir().join("shapes.csv");
            stages::write_shape_report(&rows, &out, &self.rec)?;
            Ok(vec![out])
        })
    }

    pub fn evaluate_distribution(&self, force: bool, sample_size: usize) -> Result<bool, Failure> {
        self.global_stage("evaluate-distribution", force, || {
            let polys = stages::read_field_files(&self.field_files())?;
            let rows = stages::evaluate_distribution(&polys, &self.regions(), sample_size, self.cfg.seeds.master)?;
            stages::write_distribution_report(&rows, &self.reports_dir(), &self.rec)
        })
    }

    /// Every stage, resuming from the manifest. Tile failures skip all
    /// global stages and end in [`Failure::Partial`].
    pub fn pipeline(&self) -> Result<(), Failure> {
        let production = self.run_tiles(&TileStage::PRODUCTION, &[], true)?;
        if !production.failed.is_empty() {
            return Err(self.partial(production.failed));
        }
        let mut changed = production.executed;
        let modelled = self.cfg.paths.ground_truth.is_some();
        if modelled {
            changed |= self.train(changed)?;
            self.loco(changed)?;
            let scoring = self.run_tiles(&TileStage::SCORING, &[], !changed)?;
            if !scoring.failed.is_empty() {
                return Err(self.partial(scoring.failed));
            }
            changed |= scoring.executed;
        } else {
            warn!("no ground truth configured; confidence modelling and filtering skipped");
        }
        self.merge_fields(changed)?;
        if modelled {
            self.merge_filtered(changed)?;
            self.retention(changed)?;
        }
        if self.cfg.evaluate.regions.is_empty() {
            info!("no evaluation regions configured");
            return Ok(());
        }
        if self.cfg.paths.parcels.is_some() && self.cfg.paths.adm0.is_some() {
            self.evaluate_pixels(changed, &self.cfg.thresholds.confidence.clone())?;
        }
        if modelled {
            self.evaluate_recall(changed)?;
        }
        self.evaluate_shapes(changed)?;
        self.evaluate_distribution(changed, self.cfg.evaluate.sample_size)?;
        Ok(())
    }
}
