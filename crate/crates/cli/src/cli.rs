use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fieldmap_core::confidence::{CropFilter, ModelKind};
use fieldmap_core::evaluate::PositiveClasses;
use fieldmap_core::indicators::FeatureSet;
use fieldmap_core::stitch::Backend;

use crate::config::{PipelineConfig, PARALLELISM_ENV};
use crate::failure::Failure;
use crate::fixture::write_fixture;
use crate::pipeline::{Executor, TileStage};

#[derive(Debug, Parser)]
#[command(name = "fieldmap", version, about = "Field-boundary mapping pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, short = 'c', global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for tile-level parallelism.
    #[arg(long, short = 'j', global = true, env = PARALLELISM_ENV)]
    pub parallelism: Option<usize>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Log filter, e.g. `info` or `fieldmap=debug`.
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic two-tile dataset and its configuration.
    Fixture {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 42)]
        fixture_seed: u64,
    },
    /// Run one stage (or the whole pipeline) from the configuration.
    Run {
        #[command(subcommand)]
        stage: Stage,
    },
    #[command(flatten)]
    Stage(Stage),
}

#[derive(Debug, Clone, Args, Default)]
pub struct TileSelect {
    /// Restrict to these tile ids (repeatable); all tiles by default.
    #[arg(long = "tile")]
    pub tiles: Vec<String>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct ModelFlags {
    #[arg(long, value_parser = parse_serde::<FeatureSet>)]
    pub feature_set: Option<FeatureSet>,
    #[arg(long, value_parser = parse_serde::<CropFilter>)]
    pub filter: Option<CropFilter>,
    #[arg(long, value_parser = parse_serde::<ModelKind>)]
    pub model: Option<ModelKind>,
}

#[derive(Debug, Subcommand)]
pub enum Stage {
    /// Seasonal median composites per tile.
    Composite {
        #[command(flatten)]
        select: TileSelect,
        #[arg(long)]
        cloud: Option<f64>,
    },
    /// Patch inference and Gaussian stitching per tile.
    Stitch {
        #[command(flatten)]
        select: TileSelect,
        /// `synthetic` or a path to a linear backend JSON file.
        #[arg(long)]
        backend: Option<String>,
    },
    /// Connected components to field polygons per tile.
    Vectorize {
        #[command(flatten)]
        select: TileSelect,
        #[arg(long)]
        min_pixels: Option<usize>,
    },
    /// 500 m indicator rasters and cell tables per tile.
    Indicators {
        #[command(flatten)]
        select: TileSelect,
    },
    /// Confidence model training, application and validation.
    Confidence {
        #[command(subcommand)]
        action: ConfidenceAction,
    },
    /// Keep polygons whose confidence reaches the threshold(s).
    Filter {
        #[command(flatten)]
        select: TileSelect,
        #[arg(long = "threshold")]
        thresholds: Vec<f64>,
    },
    /// Validation reports.
    Evaluate {
        #[command(subcommand)]
        report: EvaluateReport,
    },
    /// Every stage, resuming from the run manifest.
    Pipeline,
}

#[derive(Debug, Subcommand)]
pub enum ConfidenceAction {
    /// Train the cell model and report k-fold metrics.
    Train(ModelFlags),
    /// Score every tile's cells with the trained model.
    Apply {
        #[command(flatten)]
        select: TileSelect,
    },
    /// Leave-one-country-out validation.
    Evaluate(ModelFlags),
    /// Fields and area retained across thresholds.
    Retention,
}

#[derive(Debug, Subcommand)]
pub enum EvaluateReport {
    /// Pooled pixel precision, recall, F1 and IoU per region.
    Pixels {
        #[arg(long = "threshold")]
        thresholds: Vec<f64>,
        #[arg(long, value_parser = parse_serde::<PositiveClasses>)]
        positive: Option<PositiveClasses>,
    },
    /// Recall inside ground-truth coverage hulls.
    Recall,
    /// Per-polygon shape statistics.
    Shapes,
    /// Sampled shape distribution per region.
    Distribution {
        #[arg(long)]
        sample_size: Option<usize>,
    },
}

/// Parse a snake_case enum through its serde representation.
fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl Cli {
    fn load_config(&self) -> Result<PipelineConfig, Failure> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Failure::Usage("--config is required for this command".into()))?;
        let mut cfg = PipelineConfig::load(path)?;
        if let Some(p) = self.parallelism {
            cfg.parallelism = Some(p);
        }
        if let Some(s) = self.seed {
            cfg.seeds.master = s;
        }
        if let Some(o) = &self.out {
            cfg.paths.output = o.clone();
        }
        Ok(cfg)
    }
}

fn apply_model_flags(cfg: &mut PipelineConfig, f: &ModelFlags) {
    if let Some(s) = f.feature_set {
        cfg.model.feature_set = s;
    }
    if let Some(x) = f.filter {
        cfg.thresholds.crop_filter = x;
    }
    if let Some(k) = f.model {
        cfg.model.kind = k;
    }
}

/// Fold stage flags into the configuration they override.
fn apply_overrides(cfg: &mut PipelineConfig, stage: &Stage) -> Result<(), Failure> {
    match stage {
        Stage::Composite { cloud: Some(c), .. } => cfg.thresholds.cloud = *c,
        Stage::Stitch { backend: Some(b), .. } => {
            cfg.stitch.backend = b.parse::<Backend>().map_err(|e| Failure::Usage(format!("--backend: {e}")))?;
        }
        Stage::Vectorize { min_pixels: Some(m), .. } => cfg.thresholds.min_pixels = *m,
        Stage::Filter { thresholds, .. } if !thresholds.is_empty() => cfg.thresholds.confidence = thresholds.clone(),
        Stage::Confidence {
            action: ConfidenceAction::Train(f) | ConfidenceAction::Evaluate(f),
        } => apply_model_flags(cfg, f),
        Stage::Evaluate {
            report: EvaluateReport::Pixels { thresholds, positive },
        } => {
            if !thresholds.is_empty() {
                cfg.thresholds.confidence = thresholds.clone();
            }
            if let Some(p) = positive {
                cfg.evaluate.positive = *p;
            }
        }
        Stage::Evaluate {
            report: EvaluateReport::Distribution { sample_size: Some(n) },
        } => cfg.evaluate.sample_size = *n,
        _ => {}
    }
    cfg.validate()
}

fn run_stage(cfg: PipelineConfig, stage: &Stage) -> Result<(), Failure> {
    let ex = Executor::new(cfg)?;
    match stage {
        Stage::Composite { select, .. } => ex.tile_command(&[TileStage::Composite], &select.tiles),
        Stage::Stitch { select, .. } => ex.tile_command(&[TileStage::Stitch], &select.tiles),
        Stage::Vectorize { select, .. } => ex.tile_command(&[TileStage::Vectorize], &select.tiles),
        Stage::Indicators { select } => ex.tile_command(&[TileStage::Indicators], &select.tiles),
        Stage::Confidence { action } => match action {
            ConfidenceAction::Train(_) => ex.train(true).map(drop),
            ConfidenceAction::Apply { select } => ex.tile_command(&[TileStage::Confidence], &select.tiles),
            ConfidenceAction::Evaluate(_) => ex.loco(true).map(drop),
            ConfidenceAction::Retention => ex.retention(true).map(drop),
        },
        Stage::Filter { select, .. } => {
            ex.tile_command(&[TileStage::Filter], &select.tiles)?;
            if select.tiles.is_empty() {
                ex.merge_filtered(true)?;
            }
            Ok(())
        }
        Stage::Evaluate { report } => match report {
            EvaluateReport::Pixels { .. } => ex.evaluate_pixels(true, &ex.cfg.thresholds.confidence).map(drop),
            EvaluateReport::Recall => ex.evaluate_recall(true).map(drop),
            EvaluateReport::Shapes => ex.evaluate_shapes(true).map(drop),
            EvaluateReport::Distribution { .. } => ex.evaluate_distribution(true, ex.cfg.evaluate.sample_size).map(drop),
        },
        Stage::Pipeline => ex.pipeline(),
    }
}

pub fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Fixture { dir, fixture_seed } => {
            let path = write_fixture(dir, *fixture_seed)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Run { stage } | Command::Stage(stage) => {
            let mut cfg = cli.load_config()?;
            apply_overrides(&mut cfg, stage)?;
            run_stage(cfg, stage)
        }
    }
}
