//! File-level stage functions shared by the subcommands and the pipeline.
//!
//! Each function reads its inputs from disk, calls into `fieldmap_core`
//! and writes its artifacts through a [`Recorder`], so every output gets an
//! atomic rename and a provenance sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use fieldmap_core::composite::{
    composite_to_dn, fallback_windows, grid_centroid, load_scene, median_composite, read_manifest, season_windows_or_fallback,
    ManifestRecord, SeasonWindow,
};
use fieldmap_core::confidence::{
    apply_confidence, attach_confidence, balanced_subsample, build_training_set, coverage_hulls, cross_validate, design,
    gt_cell_raster, loco, retention_from_scores, threshold_polygons, confidence_at, ConfidenceModel, CoverageHull,
    CropFilter, CvReport, LocoReport, RetentionRow, TrainingCell,
};
use fieldmap_core::evaluate::{
    confidence_mask_10m, distribution_summary, filter_parcels, format_reports, hull_confusion, mask_predictions,
    pixel_confusion, read_parcels, reference_mask, shape_metrics, Confusion, CropAllowlist, DistributionSummary,
    EvaluationReport, MetricCrs, Parcel, PositiveClasses, Variant,
};
use fieldmap_core::geom::{Point, Polygon};
use fieldmap_core::indicators::{
    binarize_cropland, builtin_cropland_layers, compute_indicators, consensus_count, read_cell_table, write_cell_table,
    write_indicator_rasters, CellIndicatorRecord, FeatureSet, IndicatorTable,
};
use fieldmap_core::raster::cog::{read_cog, read_raster, read_raster_f64, write_cog, write_raster};
use fieldmap_core::raster::{resample_nearest, GridSpec, ProbabilityRaster, Raster, NODATA_TRIPLE};
use fieldmap_core::stitch::{argmax_classify, normalize_patch, predict_tile, Backend, CLASS_NODATA};
use fieldmap_core::vectorize::{
    assign_country, extract_fields, read_fields, write_fields, write_geojson, CountryTable, FieldPolygon,
};
use serde::Serialize;
use tracing::info;

use crate::artifacts::Recorder;
use crate::config::ModelConfig;
use crate::failure::Failure;

fn log_done(stage: &str, tile: Option<&str>, start: Instant, pixels: usize) {
    let wall_ms = start.elapsed().as_millis() as u64;
    let mpix_per_s = if wall_ms == 0 { 0.0 } else { pixels as f64 / 1e3 / wall_ms as f64 };
    info!(stage, tile = tile.unwrap_or("-"), wall_ms, pixels, mpix_per_s, "stage finished");
}

fn input<E: std::fmt::Display>(what: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Input(format!("{what}: {e}"))
}

fn write_csv<T: Serialize>(rec: &Recorder, path: &Path, stage: &str, rows: &[T]) -> Result<(), Failure> {
    rec.write(path, stage, None, |p| {
        let mut w = csv::Writer::from_path(p).map_err(input(p.display()))?;
        for r in rows {
            w.serialize(r).map_err(input(p.display()))?;
        }
        w.flush().map_err(input(p.display()))
    })
}

fn write_json<T: Serialize>(rec: &Recorder, path: &Path, stage: &str, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    rec.write_text(path, stage, &text)
}

/// Output format for vectorized fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldFormat {
    #[default]
    Parquet,
    GeoJson,
}

impl FromStr for FieldFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "parquet" | "geoparquet" => Ok(FieldFormat::Parquet),
            "geojson" | "json" => Ok(FieldFormat::GeoJson),
            _ => Err(format!("unknown field format '{s}' (expected parquet or geojson)")),
        }
    }
}

impl FieldFormat {
    pub fn from_path(p: &Path) -> Self {
        match p.extension().and_then(|e| e.to_str()) {
            Some("geojson" | "json") => FieldFormat::GeoJson,
            _ => FieldFormat::Parquet,
        }
    }
}

// ---------------------------------------------------------------- composite

pub struct CompositeArgs<'a> {
    pub manifest: &'a Path,
    pub sos: Option<&'a Path>,
    pub eos: Option<&'a Path>,
    pub year: i32,
    pub cloud_threshold: f64,
    pub bracket_days: i64,
}

fn windows_for(args: &CompositeArgs<'_>, grid: &GridSpec) -> Result<(SeasonWindow, SeasonWindow), Failure> {
    let centroid = grid_centroid(grid);
    match (args.sos, args.eos) {
        (Some(s), Some(e)) => {
            let sos = read_raster_f64(s)?;
            let eos = read_raster_f64(e)?;
            Ok(season_windows_or_fallback(&sos, &eos, centroid, args.bracket_days, args.year).0)
        }
        (None, None) => {
            tracing::warn!("no crop calendar given, using hemispheric default seasons");
            Ok(fallback_windows(centroid.1, args.year))
        }
        _ => Err(Failure::Usage("start- and end-of-season rasters must be given together".into())),
    }
}

/// Planting and harvest median composites as `planting.tif` and `harvest.tif`.
pub fn composite_tile(args: &CompositeArgs<'_>, out_dir: &Path, tile: &str, rec: &Recorder) -> Result<Vec<PathBuf>, Failure> {
    let start = Instant::now();
    let records = read_manifest(args.manifest)?;
    let first = records
        .first()
        .ok_or_else(|| Failure::Input(format!("{}: manifest lists no scenes", args.manifest.display())))?;
    let grid = read_raster::<u8>(&first.scl_path)?.grid;
    let (planting, harvest) = windows_for(args, &grid)?;
    let mut outputs = Vec::new();
    for (name, window) in [("planting", planting), ("harvest", harvest)] {
        let chosen: Vec<&ManifestRecord> = records.iter().filter(|r| window.contains(r.date)).collect();
        if chosen.is_empty() {
            return Err(Failure::Input(format!(
                "tile {tile}: no scenes inside the {name} window {}..{}",
                window.start, window.end
            )));
        }
        let scenes = chosen.into_iter().map(load_scene).collect::<Result<Vec<_>, _>>()?;
        let c = median_composite(&scenes, args.cloud_threshold)?;
        if c.all_excluded {
            tracing::warn!(tile, season = name, "every scene exceeded the cloud threshold");
        }
        info!(tile, season = name, scenes = c.scenes_used, "composited");
        let path = out_dir.join(format!("{name}.tif"));
        let dn = composite_to_dn(&c.raster);
        rec.write_core(&path, "composite", Some(tile), |p| write_cog(p, &dn))?;
        outputs.push(path);
    }
    log_done("composite", Some(tile), start, grid.len() * 2);
    Ok(outputs)
}

// ------------------------------------------------------------------- stitch

pub struct StitchArgs<'a> {
    pub planting: &'a Path,
    pub harvest: &'a Path,
    pub backend: &'a Backend,
    pub boa_offset: i32,
    pub upper_clamp: f64,
}

/// Eight-channel inference over a tile: `probs.tif` (3 bands) and `classes.tif`.
pub fn stitch_tile(args: &StitchArgs<'_>, out_dir: &Path, tile: &str, rec: &Recorder) -> Result<Vec<PathBuf>, Failure> {
    let start = Instant::now();
    let planting = read_cog::<u16>(args.planting)?;
    let harvest = read_cog::<u16>(args.harvest)?;
    planting.grid.ensure_same(&harvest.grid, "planting vs harvest composite")?;
    for (m, p) in [(&planting, args.planting), (&harvest, args.harvest)] {
        if m.band_count() != 4 {
            return Err(Failure::Input(format!("{}: expected 4 bands, found {}", p.display(), m.band_count())));
        }
    }
    let grid = planting.grid;
    let mut tile_data = Vec::with_capacity(8 * grid.len());
    for band in planting.bands.iter().chain(&harvest.bands) {
        tile_data.extend(normalize_patch(band, args.boa_offset, args.upper_clamp));
    }
    let backend = args.backend.load()?;
    let mut probs: ProbabilityRaster = predict_tile(&*backend, &tile_data, grid)?;
    for i in 0..grid.len() {
        if planting.bands.iter().chain(&harvest.bands).any(|b| b[i] == 0) {
            probs.data[i] = NODATA_TRIPLE;
        }
    }
    let classes = argmax_classify(&probs);
    let probs_path = out_dir.join("probs.tif");
    let classes_path = out_dir.join("classes.tif");
    let bands = probs.to_bands();
    rec.write_core(&probs_path, "stitch", Some(tile), |p| write_cog(p, &bands))?;
    rec.write_core(&classes_path, "stitch", Some(tile), |p| write_raster(p, &classes))?;
    log_done("stitch", Some(tile), start, grid.len());
    Ok(vec![probs_path, classes_path])
}

// ---------------------------------------------------------------- vectorize

/// ADM0 raster of country codes as `i32`, nodata as `i32::MIN`.
pub fn read_adm0(path: &Path) -> Result<Raster<i32>, Failure> {
    let r = read_raster_f64(path)?;
    Ok(r.map(Some(i32::MIN), |v| if v.is_nan() { i32::MIN } else { v.round() as i32 }))
}

pub fn load_country_table(path: Option<&Path>) -> Result<CountryTable, Failure> {
    match path {
        Some(p) => Ok(CountryTable::load(p)?),
        None => Ok(CountryTable::default()),
    }
}

pub struct VectorizeArgs<'a> {
    pub classes: &'a Path,
    pub min_pixels: usize,
    pub adm0: Option<&'a Path>,
    pub countries: &'a CountryTable,
    pub year: i32,
}

pub fn write_field_file(polys: &[FieldPolygon], path: &Path, stage: &str, tile: Option<&str>, rec: &Recorder) -> Result<(), Failure> {
    match FieldFormat::from_path(path) {
        FieldFormat::Parquet => rec.write_core(path, stage, tile, |p| write_fields(polys, p)),
        FieldFormat::GeoJson => rec.write_core(path, stage, tile, |p| write_geojson(polys, p)),
    }
}

pub fn vectorize_tile(args: &VectorizeArgs<'_>, out: &Path, tile: &str, rec: &Recorder) -> Result<Vec<FieldPolygon>, Failure> {
    let start = Instant::now();
    let classes = read_raster::<u8>(args.classes)?;
    let mut polys = extract_fields(&classes, args.min_pixels, tile, args.year);
    if let Some(adm0) = args.adm0 {
        assign_country(&mut polys, &read_adm0(adm0)?, args.countries);
    }
    write_field_file(&polys, out, "vectorize", Some(tile), rec)?;
    info!(tile, fields = polys.len(), "vectorized");
    log_done("vectorize", Some(tile), start, classes.grid.len());
    Ok(polys)
}

// --------------------------------------------------------------- indicators

/// Per-pixel count of agreeing cropland layers, each reprojected by nearest
/// neighbour onto `grid`. Missing layer files are skipped with a warning.
pub fn build_consensus(dir: &Path, grid: &GridSpec) -> Result<Raster<u8>, Failure> {
    let mut binaries = Vec::new();
    for spec in builtin_cropland_layers() {
        let path = dir.join(format!("{}.tif", spec.name));
        if !path.exists() {
            tracing::warn!(layer = %spec.name, path = %path.display(), "cropland layer missing, skipped");
            continue;
        }
        let layer = read_raster_f64(&path)?;
        let on_tile = resample_nearest(&layer, grid, f64::NAN)?.raster;
        binaries.push(binarize_cropland(&on_tile, &spec));
    }
    if binaries.is_empty() {
        return Err(Failure::Input(format!("{}: no cropland layers found", dir.display())));
    }
    Ok(consensus_count(&binaries)?)
}

pub struct IndicatorArgs<'a> {
    pub probs: &'a Path,
    pub classes: &'a Path,
    pub consensus_dir: Option<&'a Path>,
}

/// Indicator rasters under `out_dir/indicators/` plus `out_dir/cells.csv`.
pub fn indicators_tile(args: &IndicatorArgs<'_>, out_dir: &Path, tile: &str, rec: &Recorder) -> Result<IndicatorTable, Failure> {
    let start = Instant::now();
    let probs = ProbabilityRaster::from_bands(&read_cog::<f32>(args.probs)?)?;
    let classes = read_raster::<u8>(args.classes)?;
    let consensus = args.consensus_dir.map(|d| build_consensus(d, &classes.grid)).transpose()?;
    let table = compute_indicators(&probs, &classes, consensus.as_ref())?;

    let final_dir = out_dir.join("indicators");
    let tmp_dir = out_dir.join(".indicators.partial");
    let _ = fs::remove_dir_all(&tmp_dir);
    fs::create_dir_all(&tmp_dir).map_err(input(tmp_dir.display()))?;
    let written = write_indicator_rasters(&table, &tmp_dir)?;
    let _ = fs::remove_dir_all(&final_dir);
    fs::rename(&tmp_dir, &final_dir).map_err(input(final_dir.display()))?;
    for p in &written {
        if let Some(name) = p.file_name() {
            rec.sidecar(&final_dir.join(name), "indicators", Some(tile))?;
        }
    }
    rec.write_core(&out_dir.join("cells.csv"), "indicators", Some(tile), |p| write_cell_table(&table.records, p))?;
    log_done("indicators", Some(tile), start, classes.grid.len());
    Ok(table)
}

// --------------------------------------------------------------- confidence

pub fn read_cell_tables(paths: &[PathBuf]) -> Result<Vec<CellIndicatorRecord>, Failure> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_cell_table(p)?);
    }
    Ok(all)
}

/// Ground-truth polygons grouped by their country attribute.
pub fn ground_truth_by_country(path: &Path, country_property: &str) -> Result<BTreeMap<String, Vec<Polygon>>, Failure> {
    let mut by_country: BTreeMap<String, Vec<Polygon>> = BTreeMap::new();
    for parcel in read_parcels(path, country_property)? {
        let country = parcel.crop_code.unwrap_or_else(|| "UNK".to_string());
        by_country.entry(country).or_default().extend(parcel.polygons);
    }
    if by_country.is_empty() {
        return Err(Failure::Input(format!("{}: no ground-truth polygons", path.display())));
    }
    Ok(by_country)
}

pub fn hulls_for(gt: &BTreeMap<String, Vec<Polygon>>, cfg: &ModelConfig) -> Vec<CoverageHull> {
    gt.iter()
        .map(|(country, polys)| {
            let centroids: Vec<Point> = polys.iter().map(Polygon::centroid).collect();
            coverage_hulls(country, &centroids, cfg.dbscan_eps_deg, cfg.dbscan_min_samples, cfg.hull_buffer_deg)
        })
        .collect()
}

pub struct TrainingArgs<'a> {
    pub cell_tables: &'a [PathBuf],
    pub ground_truth: &'a Path,
    pub model: &'a ModelConfig,
    pub feature_set: FeatureSet,
    pub filter: CropFilter,
    pub seed: u64,
}

/// Labelled, class-balanced training cells.
pub fn training_cells(args: &TrainingArgs<'_>) -> Result<Vec<TrainingCell>, Failure> {
    let mut records = read_cell_tables(args.cell_tables)?;
    // A cell straddling two tiles appears in both tables; keep the copy
    // that saw more of the cell.
    records.sort_by_key(|r| (r.row, r.col, std::cmp::Reverse(r.valid_pixels)));
    records.dedup_by_key(|r| (r.row, r.col));
    let grid = IndicatorTable::from_records(records.clone())?.grid;
    let gt = ground_truth_by_country(args.ground_truth, &args.model.country_property)?;
    let hulls = hulls_for(&gt, args.model);
    let all_gt: Vec<Polygon> = gt.into_values().flatten().collect();
    let gt_cells = gt_cell_raster(&all_gt, &grid);
    let cells = build_training_set(&records, &gt_cells, &hulls, args.filter, args.feature_set)?;
    let cells = balanced_subsample(&cells, args.model.subsample_cap, args.seed);
    let fields = cells.iter().filter(|c| c.label).count();
    info!(cells = cells.len(), fields, nonfields = cells.len() - fields, "training set built");
    Ok(cells)
}

pub struct TrainOutcome {
    pub model_hash: String,
    pub cv: CvReport,
    pub outputs: Vec<PathBuf>,
}

fn cv_text(cv: &CvReport) -> String {
    let mut s = String::from("fold\tauc\tf1\tprecision\trecall\n");
    for (i, m) in cv.folds.iter().enumerate() {
        s += &format!("{i}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n", m.auc, m.f1, m.precision, m.recall);
    }
    s += &format!("mean\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n", cv.mean.auc, cv.mean.f1, cv.mean.precision, cv.mean.recall);
    s += &format!("std\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n", cv.std.auc, cv.std.f1, cv.std.precision, cv.std.recall);
    s
}

/// Train and save `model.fmcm`, with k-fold results in `cv.json` and `cv.txt`.
pub fn train_confidence(args: &TrainingArgs<'_>, out_dir: &Path, rec: &Recorder) -> Result<TrainOutcome, Failure> {
    let start = Instant::now();
    let cells = training_cells(args)?;
    let (x, y) = design(&cells);
    let spec = args.model.spec();
    let model = ConfidenceModel::train(&spec, &x, &y, args.feature_set, args.filter, args.seed)?;
    let model_path = out_dir.join("model.fmcm");
    rec.write_core(&model_path, "confidence-train", None, |p| model.save(p).map(|_| ()))?;
    let cv = cross_validate(&spec, &x, &y, args.model.folds, args.seed)?;
    let (cv_json, cv_txt) = (out_dir.join("cv.json"), out_dir.join("cv.txt"));
    write_json(rec, &cv_json, "confidence-train", &cv)?;
    rec.write_text(&cv_txt, "confidence-train", &cv_text(&cv))?;
    info!(model = %model.hash(), auc = cv.mean.auc, "confidence model trained");
    log_done("confidence-train", None, start, cells.len());
    Ok(TrainOutcome {
        model_hash: model.hash(),
        cv,
        outputs: vec![model_path, cv_json, cv_txt],
    })
}

/// Leave-one-country-out report as `loco.json` and `loco.txt`.
pub fn evaluate_confidence(args: &TrainingArgs<'_>, out_dir: &Path, rec: &Recorder) -> Result<(LocoReport, Vec<PathBuf>), Failure> {
    let cells = training_cells(args)?;
    let report = loco(&args.model.spec(), &cells, args.model.loco_min_per_class, args.seed)?;
    let (json, txt) = (out_dir.join("loco.json"), out_dir.join("loco.txt"));
    write_json(rec, &json, "confidence-evaluate", &report)?;
    rec.write_text(&txt, "confidence-evaluate", &(report.lines().join("\n") + "\n"))?;
    for line in report.lines() {
        info!(%line, "loco");
    }
    Ok((report, vec![json, txt]))
}

/// Per-cell scores for one tile's cell table, written as a 500 m raster.
pub fn apply_confidence_tile(model: &ConfidenceModel, cells: &Path, out: &Path, tile: &str, rec: &Recorder) -> Result<Raster<f32>, Failure> {
    let table = IndicatorTable::from_records(read_cell_table(cells)?)?;
    let conf = apply_confidence(model, &table)?;
    rec.write_core(out, "confidence-apply", Some(tile), |p| write_raster(p, &conf))?;
    Ok(conf)
}

/// Threshold label used in file names: `0.40`.
pub fn threshold_label(t: f64) -> String {
    format!("{t:.2}")
}

/// Polygons whose cell scores at least `t`, with their confidence attached.
pub fn filter_fields(fields: &Path, conf: &Path, t: f64, out: &Path, tile: Option<&str>, rec: &Recorder) -> Result<Vec<FieldPolygon>, Failure> {
    let mut polys = read_fields(fields)?;
    let conf = read_raster::<f32>(conf)?;
    attach_confidence(&mut polys, &conf);
    let kept = threshold_polygons(&polys, &conf, t);
    write_field_file(&kept, out, "filter", tile, rec)?;
    info!(tile = tile.unwrap_or("-"), threshold = t, kept = kept.len(), total = polys.len(), "filtered");
    Ok(kept)
}

/// Retention across all (fields, confidence) pairs, as CSV.
pub fn retention(pairs: &[(PathBuf, PathBuf)], thresholds: &[f64], out: &Path, rec: &Recorder) -> Result<Vec<RetentionRow>, Failure> {
    let mut scored = Vec::new();
    for (fields, conf) in pairs {
        let conf = read_raster::<f32>(conf)?;
        for p in read_fields(fields)? {
            let [lon, lat] = p.centroid();
            scored.push((confidence_at(&conf, lon, lat), p.area_m2));
        }
    }
    let rows = retention_from_scores(&scored, thresholds);
    write_csv(rec, out, "retention", &rows)?;
    Ok(rows)
}

// ----------------------------------------------------------------- evaluate

/// One tile's prediction and optional confidence for evaluation.
#[derive(Debug, Clone)]
pub struct EvalTile {
    pub id: String,
    pub classes: PathBuf,
    pub confidence: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EvalRegion {
    pub name: String,
    pub country: String,
    pub epsg: MetricCrs,
}

fn region_mask(adm0: &Raster<i32>, grid: &GridSpec, code: i32) -> Result<Raster<u8>, Failure> {
    let on_tile = resample_nearest(adm0, grid, i32::MIN)?.raster;
    Ok(on_tile.map(None, |v| u8::from(v == code)))
}

fn country_code(countries: &CountryTable, alpha3: &str) -> Result<i32, Failure> {
    countries
        .code_of(alpha3)
        .ok_or_else(|| Failure::Usage(format!("country '{alpha3}' is not in the country table")))
}

pub struct PixelEvalArgs<'a> {
    pub tiles: &'a [EvalTile],
    pub parcels: &'a Path,
    pub crop_column: &'a str,
    pub allowlist: Option<&'a Path>,
    pub adm0: &'a Path,
    pub countries: &'a CountryTable,
    pub regions: &'a [EvalRegion],
    pub thresholds: &'a [f64],
    pub positive: PositiveClasses,
}

fn parcels_for(all: &[Parcel], allow: Option<&CropAllowlist>, country: &str) -> Vec<Parcel> {
    match allow {
        None => all.to_vec(),
        Some(a) => match a.codes(country) {
            Some(codes) => filter_parcels(all, codes),
            None => {
                tracing::warn!(country, "country absent from the crop allowlist, keeping every parcel");
                all.to_vec()
            }
        },
    }
}

/// Pooled pixel metrics per region: unfiltered, then one row per threshold.
pub fn evaluate_pixels(args: &PixelEvalArgs<'_>) -> Result<Vec<EvaluationReport>, Failure> {
    let start = Instant::now();
    let parcels = read_parcels(args.parcels, args.crop_column)?;
    let allow = args.allowlist.map(CropAllowlist::load).transpose()?;
    let adm0 = read_adm0(args.adm0)?;
    let mut reports = Vec::new();
    let mut pixels = 0;
    for region in args.regions {
        let code = country_code(args.countries, &region.country)?;
        let kept = parcels_for(&parcels, allow.as_ref(), &region.country);
        let mut pooled = vec![Confusion::default(); 1 + args.thresholds.len()];
        for tile in args.tiles {
            let pred = read_raster::<u8>(&tile.classes)?;
            let gt = reference_mask(&kept, &pred.grid);
            let mask = region_mask(&adm0, &pred.grid, code)?;
            pooled[0] += pixel_confusion(&pred, &gt, &mask, args.positive)?;
            pixels += pred.grid.len();
            if args.thresholds.is_empty() {
                continue;
            }
            let conf_path = tile.confidence.as_ref().ok_or_else(|| {
                Failure::Usage(format!("tile {}: confidence thresholds need a confidence raster", tile.id))
            })?;
            let conf = read_raster::<f32>(conf_path)?;
            for (i, &t) in args.thresholds.iter().enumerate() {
                let keep = confidence_mask_10m(&conf, &pred.grid, t)?;
                pooled[i + 1] += pixel_confusion(&mask_predictions(&pred, &keep)?, &gt, &mask, args.positive)?;
            }
        }
        let variants = std::iter::once(Variant::Unfiltered)
            .chain(args.thresholds.iter().map(|&threshold| Variant::Confidence { threshold }));
        for (variant, c) in variants.zip(pooled) {
            reports.push(EvaluationReport::from_confusion(&region.name, variant, c)?);
        }
    }
    log_done("evaluate-pixels", None, start, pixels);
    Ok(reports)
}

#[derive(Debug, Clone, Serialize)]
struct PixelRow<'a> {
    region: &'a str,
    variant: String,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    precision: f64,
    recall: f64,
    f1: f64,
    iou: f64,
}

/// `pixels.txt` (aligned table) and `pixels.csv`.
pub fn write_pixel_reports(reports: &[EvaluationReport], out_dir: &Path, rec: &Recorder) -> Result<Vec<PathBuf>, Failure> {
    let rows: Vec<PixelRow<'_>> = reports
        .iter()
        .map(|r| PixelRow {
            region: &r.region,
            variant: r.variant.to_string(),
            tp: r.confusion.tp,
            fp: r.confusion.fp,
            fn_: r.confusion.fn_,
            tn: r.confusion.tn,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            iou: r.iou,
        })
        .collect();
    let (txt, csv) = (out_dir.join("pixels.txt"), out_dir.join("pixels.csv"));
    rec.write_text(&txt, "evaluate-pixels", &format_reports(reports))?;
    write_csv(rec, &csv, "evaluate-pixels", &rows)?;
    Ok(vec![txt, csv])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallRow {
    pub region: String,
    pub positive: String,
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub recall: f64,
}

pub struct RecallArgs<'a> {
    pub tiles: &'a [EvalTile],
    pub ground_truth: &'a Path,
    pub model: &'a ModelConfig,
    pub regions: &'a [EvalRegion],
}

/// Recall of reference pixels inside each region's coverage hulls, for both
/// positive-class conventions.
pub fn evaluate_recall(args: &RecallArgs<'_>) -> Result<Vec<RecallRow>, Failure> {
    let gt = ground_truth_by_country(args.ground_truth, &args.model.country_property)?;
    let hulls = hulls_for(&gt, args.model);
    let preds = args
        .tiles
        .iter()
        .map(|t| read_raster::<u8>(&t.classes))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for region in args.regions {
        let (Some(polys), Some(hull)) = (gt.get(&region.country), hulls.iter().find(|h| h.country == region.country))
        else {
            return Err(Failure::Input(format!("region {}: no ground truth for {}", region.name, region.country)));
        };
        for positive in [PositiveClasses::FieldAndBoundary, PositiveClasses::FieldOnly] {
            let mut c = Confusion::default();
            for pred in &preds {
                let mask = fieldmap_core::raster::rasterize_polygons(polys, &pred.grid, fieldmap_core::raster::RasterizeMode::Center);
                c += hull_confusion(pred, &mask, hull, positive)?;
            }
            if c.tp + c.fn_ == 0 {
                return Err(Failure::Input(format!(
                    "region {}: no reference pixels inside the coverage hulls",
                    region.name
                )));
            }
            rows.push(RecallRow {
                region: region.name.clone(),
                positive: positive.as_str().to_string(),
                tp: c.tp,
                fn_: c.fn_,
                recall: c.recall(),
            });
        }
    }
    Ok(rows)
}

pub fn write_recall_report(rows: &[RecallRow], out: &Path, rec: &Recorder) -> Result<(), Failure> {
    write_csv(rec, out, "evaluate-recall", rows)
}

pub fn read_field_files(paths: &[PathBuf]) -> Result<Vec<FieldPolygon>, Failure> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_fields(p)?);
    }
    Ok(all)
}

fn in_region<'a>(polys: &'a [FieldPolygon], region: &EvalRegion) -> Vec<FieldPolygon> {
    polys.iter().filter(|p| p.country.as_deref() == Some(region.country.as_str())).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeRow {
    pub region: String,
    pub id: String,
    pub area_ha: f64,
    pub perimeter_m: f64,
    pub polsby_popper: f64,
    pub shape_index: f64,
    pub fractal_dimension: f64,
}

/// Per-polygon shape statistics in each region's projected CRS. Polygons
/// whose projected area collapses are skipped with a warning.
pub fn evaluate_shapes(polys: &[FieldPolygon], regions: &[EvalRegion]) -> Result<Vec<ShapeRow>, Failure> {
    let mut rows = Vec::new();
    for region in regions {
        for p in in_region(polys, region) {
            match shape_metrics(&p, region.epsg) {
                Ok(s) => rows.push(ShapeRow {
                    region: region.name.clone(),
                    id: p.id.clone(),
                    area_ha: s.area_ha,
                    perimeter_m: s.perimeter_m,
                    polsby_popper: s.polsby_popper,
                    shape_index: s.shape_index,
                    fractal_dimension: s.fractal_dimension,
                }),
                Err(e) => tracing::warn!(id = %p.id, error = %e, "shape statistics skipped"),
            }
        }
    }
    Ok(rows)
}

pub fn write_shape_report(rows: &[ShapeRow], out: &Path, rec: &Recorder) -> Result<(), Failure> {
    write_csv(rec, out, "evaluate-shapes", rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub region: String,
    pub total_count: usize,
    pub total_area_ha: f64,
    pub sample_count: usize,
    pub median_area_ha: f64,
    pub median_perimeter_m: f64,
    pub median_polsby_popper: f64,
    pub median_shape_index: f64,
    pub median_fractal_dimension: f64,
}

impl DistributionRow {
    fn new(region: &str, d: DistributionSummary) -> Self {
        DistributionRow {
            region: region.to_string(),
            total_count: d.total_count,
            total_area_ha: d.total_area_ha,
            sample_count: d.sample_count,
            median_area_ha: d.median_area_ha,
            median_perimeter_m: d.median_perimeter_m,
            median_polsby_popper: d.median_polsby_popper,
            median_shape_index: d.median_shape_index,
            median_fractal_dimension: d.median_fractal_dimension,
        }
    }
}

pub fn evaluate_distribution(
    polys: &[FieldPolygon],
    regions: &[EvalRegion],
    sample_size: usize,
    seed: u64,
) -> Result<Vec<DistributionRow>, Failure> {
    let mut rows = Vec::new();
    for region in regions {
        let mine = in_region(polys, region);
        if mine.is_empty() {
            tracing::warn!(region = %region.name, "no fields in region");
            continue;
        }
        let d = distribution_summary(&mine, region.epsg, sample_size, seed)?;
        rows.push(DistributionRow::new(&region.name, d));
    }
    Ok(rows)
}

pub fn distribution_text(rows: &[DistributionRow]) -> String {
    let mut s = format!(
        "{:<12} {:>8} {:>12} {:>8} {:>10} {:>12} {:>8} {:>8} {:>8}\n",
        "region", "fields", "area_ha", "sampled", "med_ha", "med_perim_m", "med_pp", "med_si", "med_fd"
    );
    for r in rows {
        let d = r;
        s += &format!(
            "{:<12} {:>8} {:>12.1} {:>8} {:>10.3} {:>12.1} {:>8.4} {:>8.4} {:>8.4}\n",
            d.region,
            d.total_count,
            d.total_area_ha,
            d.sample_count,
            d.median_area_ha,
            d.median_perimeter_m,
            d.median_polsby_popper,
            d.median_shape_index,
            d.median_fractal_dimension
        );
    }
    s
}

pub fn write_distribution_report(rows: &[DistributionRow], out_dir: &Path, rec: &Recorder) -> Result<Vec<PathBuf>, Failure> {
    let (txt, csv) = (out_dir.join("distribution.txt"), out_dir.join("distribution.csv"));
    rec.write_text(&txt, "evaluate-distribution", &distribution_text(rows))?;
    write_csv(rec, &csv, "evaluate-distribution", rows)?;
    Ok(vec![txt, csv])
}

/// Pixel classes that mark missing input after stitching.
pub fn nodata_fraction(classes: &Raster<u8>) -> f64 {
    classes.data.iter().filter(|&&c| c == CLASS_NODATA).count() as f64 / classes.data.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use fieldmap_core::raster::GridSpec;

    #[test]
    fn format_follows_extension() {
        assert_eq!(FieldFormat::from_path(Path::new("a/b.geojson")), FieldFormat::GeoJson);
        assert_eq!(FieldFormat::from_path(Path::new("a/b.parquet")), FieldFormat::Parquet);
        assert_eq!("GeoJSON".parse::<FieldFormat>().unwrap(), FieldFormat::GeoJson);
        assert!("shp".parse::<FieldFormat>().is_err());
    }

    #[test]
    fn threshold_labels_are_fixed_width() {
        assert_eq!(threshold_label(0.4), "0.40");
        assert_eq!(threshold_label(0.5), "0.50");
    }

    #[test]
    fn region_mask_matches_code_only() {
        let coarse = GridSpec::from_origin(0.0, 1.0, 0.5, 2, 2).unwrap();
        let adm0 = Raster::new(coarse, vec![1, 2, 1, i32::MIN], Some(i32::MIN)).unwrap();
        let fine = GridSpec::from_origin(0.0, 1.0, 0.25, 4, 4).unwrap();
        let m = region_mask(&adm0, &fine, 1).unwrap();
        assert_eq!(m.data.iter().filter(|&&v| v == 1).count(), 8);
        assert_eq!(m.get(0, 0), 1);
        assert_eq!(m.get(0, 3), 0);
        assert_eq!(m.get(3, 3), 0);
    }
}
