//! Synthetic end-to-end dataset: two 400x400 tiles of 10 m scenes plus every
//! auxiliary input the pipeline reads.
//!
//! Each tile has a left half of vigorous, cropland-consensus fields covered
//! by ground truth and a right half of weaker vegetation that few products
//! call cropland. Tile 0 lies in Zambia and tile 1, half a degree east, in
//! Malawi on the country raster, so leave-one-country-out has two countries
//! to work with.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use fieldmap_core::composite::{write_manifest, ManifestRecord};
use fieldmap_core::geom::Polygon;
use fieldmap_core::raster::cog::{write_cog, write_raster};
use fieldmap_core::raster::{GridSpec, MultiRaster, Raster, PIXEL_10M_DEG};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{PipelineConfig, Region, TileConfig};
use crate::failure::Failure;

pub const TILE_SIDE: usize = 400;
pub const FIXTURE_YEAR: i32 = 2024;
pub const FIXTURE_WEST: f64 = 28.0;
pub const FIXTURE_NORTH: f64 = -14.0;
/// Tile origins are this many 10 m pixels apart (half a degree), far
/// enough for the two countries' coverage hulls to stay disjoint.
pub const TILE_SPACING: usize = 6000;
/// Width in 10 m pixels of the extent covering both tiles.
const EXTENT_COLS: usize = TILE_SPACING + TILE_SIDE;
const HALF: usize = TILE_SIDE / 2;
const TILE_COUNTRIES: [(&str, i32); 2] = [("ZMB", 894), ("MWI", 454)];

/// B02, B03, B04, B08 surface reflectance.
const BARE: [f64; 4] = [0.08, 0.12, 0.15, 0.22];
const VIGOROUS: [f64; 4] = [0.03, 0.07, 0.04, 0.42];
const WEAK: [f64; 4] = [0.05, 0.09, 0.08, 0.30];
const CLOUD: [f64; 4] = [0.55, 0.56, 0.58, 0.60];

const SCL_VEGETATION: u8 = 4;
const SCL_BARE: u8 = 5;
const SCL_CLOUD_HIGH: u8 = 9;

/// A rectangular parcel in tile pixel coordinates (half-open).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureField {
    pub tile: usize,
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
    pub vegetated: bool,
    pub vigorous: bool,
    pub ground_truth: bool,
}

impl FixtureField {
    pub fn polygon(&self) -> Polygon {
        let west = tile_west(self.tile);
        Polygon::rect(
            west + self.col0 as f64 * PIXEL_10M_DEG,
            FIXTURE_NORTH - self.row1 as f64 * PIXEL_10M_DEG,
            west + self.col1 as f64 * PIXEL_10M_DEG,
            FIXTURE_NORTH - self.row0 as f64 * PIXEL_10M_DEG,
        )
    }
}

pub fn tile_west(tile: usize) -> f64 {
    FIXTURE_WEST + (tile * TILE_SPACING) as f64 * PIXEL_10M_DEG
}

pub fn tile_grid(tile: usize) -> GridSpec {
    GridSpec::from_origin(tile_west(tile), FIXTURE_NORTH, PIXEL_10M_DEG, TILE_SIDE, TILE_SIDE).expect("valid fixture grid")
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

/// Rows of rectangles with 2-4 pixel gaps, kept inside one half of the tile.
fn layout_fields(tile: usize, rng: &mut ChaCha8Rng) -> Vec<FixtureField> {
    let mut out = Vec::new();
    for (c_lo, c_hi, vigorous) in [(0, HALF, true), (HALF, TILE_SIDE, false)] {
        let mut r = 2;
        loop {
            let h = rng.gen_range(10..30);
            if r + h + 2 > TILE_SIDE {
                break;
            }
            let mut c = c_lo + 2;
            loop {
                let w = rng.gen_range(10..40);
                if c + w + 2 > c_hi {
                    break;
                }
                let vegetated = rng.gen_bool(0.85);
                let ground_truth = vegetated && (vigorous || rng.gen_bool(0.1));
                out.push(FixtureField {
                    tile,
                    row0: r,
                    row1: r + h,
                    col0: c,
                    col1: c + w,
                    vegetated,
                    vigorous,
                    ground_truth,
                });
                c += w + rng.gen_range(2..=4);
            }
            r += h + rng.gen_range(2..=4);
        }
    }
    out
}

/// Per-pixel cover: 0 bare, 1 vigorous crop, 2 weak vegetation.
fn cover_map(fields: &[FixtureField]) -> Vec<u8> {
    let mut cover = vec![0u8; TILE_SIDE * TILE_SIDE];
    for f in fields.iter().filter(|f| f.vegetated) {
        for r in f.row0..f.row1 {
            for c in f.col0..f.col1 {
                cover[r * TILE_SIDE + c] = if f.vigorous { 1 } else { 2 };
            }
        }
    }
    cover
}

struct SceneSpec {
    date: &'static str,
    cloud_fraction: f64,
    blob: bool,
}

const SCENES: [SceneSpec; 8] = [
    SceneSpec { date: "2024-04-15", cloud_fraction: 0.05, blob: true },
    SceneSpec { date: "2024-04-25", cloud_fraction: 0.55, blob: false },
    SceneSpec { date: "2024-05-01", cloud_fraction: 0.02, blob: false },
    SceneSpec { date: "2024-05-12", cloud_fraction: 0.10, blob: false },
    SceneSpec { date: "2024-07-01", cloud_fraction: 0.00, blob: false },
    SceneSpec { date: "2024-08-20", cloud_fraction: 0.03, blob: false },
    SceneSpec { date: "2024-09-02", cloud_fraction: 0.08, blob: false },
    SceneSpec { date: "2024-09-15", cloud_fraction: 0.01, blob: false },
];

fn write_scenes(dir: &Path, tile: usize, cover: &[u8], rng: &mut ChaCha8Rng) -> Result<PathBuf, Failure> {
    let grid = tile_grid(tile);
    let mut records = Vec::new();
    for (i, s) in SCENES.iter().enumerate() {
        let (cy, cx, radius) = (rng.gen_range(80..320) as f64, rng.gen_range(80..320) as f64, 30.0);
        let mut bands = vec![Vec::with_capacity(grid.len()); 4];
        let mut scl = Vec::with_capacity(grid.len());
        for (p, &cv) in cover.iter().enumerate() {
            let (r, c) = ((p / TILE_SIDE) as f64, (p % TILE_SIDE) as f64);
            let clouded = s.blob && (r - cy).hypot(c - cx) < radius;
            let refl = match (clouded, cv) {
                (true, _) => CLOUD,
                (false, 0) => BARE,
                (false, 1) => VIGOROUS,
                _ => WEAK,
            };
            for (b, band) in bands.iter_mut().enumerate() {
                let noisy = refl[b] + rng.gen_range(-0.005..0.005);
                band.push((noisy * 10_000.0 + 1000.0).round() as u16);
            }
            scl.push(if clouded {
                SCL_CLOUD_HIGH
            } else if cv == 0 {
                SCL_BARE
            } else {
                SCL_VEGETATION
            });
        }
        let name = format!("scene_{i}.tif");
        let scl_name = format!("scene_{i}_scl.tif");
        write_cog(dir.join(&name), &MultiRaster::new(grid, bands, Some(0))?)?;
        write_raster(dir.join(&scl_name), &Raster::new(grid, scl, None)?)?;
        records.push(ManifestRecord {
            path: name.into(),
            date: NaiveDate::parse_from_str(s.date, "%Y-%m-%d").expect("fixture date"),
            cloud_fraction: s.cloud_fraction,
            scl_path: scl_name.into(),
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}

/// Two cropland values per product: (cropland, not cropland).
fn layer_values(name: &str) -> (f64, f64) {
    match name {
        "asap" => (0.6, 0.0),
        "globcover" => (11.0, 50.0),
        "cci" => (10.0, 60.0),
        "copernicus" => (40.0, 20.0),
        "glad" => (1.0, 0.0),
        "esri" => (5.0, 2.0),
        "deafrica" => (1.0, 0.0),
        "worldcereal" => (100.0, 0.0),
        _ => (1.0, 0.0),
    }
}

/// Fine-pixel multiple approximating a product's native resolution while
/// keeping half-tile edges on pixel boundaries.
fn layer_factor(resolution_m: f64) -> usize {
    match resolution_m as usize {
        0..=50 => 4,
        51..=150 => 10,
        151..=400 => 25,
        _ => 50,
    }
}

fn write_consensus(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    for spec in fieldmap_core::indicators::builtin_cropland_layers() {
        let k = layer_factor(spec.resolution_m);
        let (w, h) = (EXTENT_COLS / k, TILE_SIDE / k);
        let grid = GridSpec::from_origin(FIXTURE_WEST, FIXTURE_NORTH, PIXEL_10M_DEG * k as f64, w, h)?;
        let (yes, no) = layer_values(&spec.name);
        let data = (0..grid.len())
            .map(|i| {
                let local = (i % w) * k % TILE_SPACING;
                let agrees = local < TILE_SIDE && (local < HALF || spec.name == "esri");
                (if agrees { yes } else { no }) as f32
            })
            .collect();
        write_raster(dir.join(format!("{}.tif", spec.name)), &Raster::new(grid, data, Some(f32::NAN))?)?;
    }
    Ok(())
}

fn write_calendar(dir: &Path) -> Result<(PathBuf, PathBuf), Failure> {
    let grid = GridSpec::from_origin(27.0, -13.0, 0.25, 12, 12)?;
    let sos = dir.join("sos.tif");
    let eos = dir.join("eos.tif");
    write_raster(&sos, &Raster::filled(grid, 120.0f32, Some(f32::NAN)))?;
    write_raster(&eos, &Raster::filled(grid, 250.0f32, Some(f32::NAN)))?;
    Ok((sos, eos))
}

fn write_adm0(dir: &Path) -> Result<PathBuf, Failure> {
    let k = 100;
    let (w, h) = (EXTENT_COLS / k, TILE_SIDE / k);
    let grid = GridSpec::from_origin(FIXTURE_WEST, FIXTURE_NORTH, PIXEL_10M_DEG * k as f64, w, h)?;
    let data = (0..grid.len())
        .map(|i| TILE_COUNTRIES[usize::from((i % w) * k >= TILE_SPACING / 2)].1)
        .collect();
    let path = dir.join("adm0.tif");
    write_raster(&path, &Raster::new(grid, data, Some(0))?)?;
    Ok(path)
}

fn feature(poly: &Polygon, props: serde_json::Value) -> serde_json::Value {
    let ring: Vec<[f64; 2]> = poly.exterior.clone();
    json!({
        "type": "Feature",
        "properties": props,
        "geometry": { "type": "Polygon", "coordinates": [ring] },
    })
}

fn write_geojson(path: &Path, features: Vec<serde_json::Value>) -> Result<(), Failure> {
    let doc = json!({ "type": "FeatureCollection", "features": features });
    fs::write(path, serde_json::to_string(&doc).expect("json")).map_err(io(path))
}

/// Crop code of a parcel: vigorous fields grow maize or soy (101/102),
/// weak vegetation is pasture (400), bare parcels are fallow (900).
fn crop_code(f: &FixtureField, index: usize) -> &'static str {
    match (f.vegetated, f.vigorous) {
        (true, true) if index % 2 == 0 => "101",
        (true, true) => "102",
        (true, false) => "400",
        (false, _) => "900",
    }
}

/// Write the dataset and a ready-to-run `pipeline.toml` into `dir`; returns
/// the configuration path.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let fields = fixture_fields(seed);
    let mut noise = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce7e);
    let mut tiles = Vec::new();
    for tile in 0..2 {
        let tile_fields: Vec<FixtureField> = fields.iter().filter(|f| f.tile == tile).copied().collect();
        let tile_dir = dir.join(format!("scenes/t{tile}"));
        fs::create_dir_all(&tile_dir).map_err(io(&tile_dir))?;
        let manifest = write_scenes(&tile_dir, tile, &cover_map(&tile_fields), &mut noise)?;
        tiles.push(TileConfig {
            id: format!("t{tile}"),
            manifest: manifest.strip_prefix(dir).expect("inside fixture").to_path_buf(),
        });
    }
    write_calendar(dir)?;
    write_adm0(dir)?;
    write_consensus(&dir.join("consensus"))?;

    let gt = fields
        .iter()
        .filter(|f| f.ground_truth)
        .map(|f| feature(&f.polygon(), json!({ "country": TILE_COUNTRIES[f.tile].0 })))
        .collect();
    write_geojson(&dir.join("gt.geojson"), gt)?;
    let parcels = fields
        .iter()
        .enumerate()
        .map(|(i, f)| feature(&f.polygon(), json!({ "crop_code": crop_code(f, i) })))
        .collect();
    write_geojson(&dir.join("parcels.geojson"), parcels)?;
    let crops = dir.join("crops.csv");
    fs::write(&crops, "country,crop_code\nZMB,101\nZMB,102\nMWI,101\nMWI,102\n").map_err(io(&crops))?;

    let mut cfg = PipelineConfig::minimal("out", FIXTURE_YEAR);
    cfg.tiles = tiles;
    cfg.seeds.master = seed;
    cfg.paths.sos = Some("sos.tif".into());
    cfg.paths.eos = Some("eos.tif".into());
    cfg.paths.adm0 = Some("adm0.tif".into());
    cfg.paths.consensus_dir = Some("consensus".into());
    cfg.paths.ground_truth = Some("gt.geojson".into());
    cfg.paths.parcels = Some("parcels.geojson".into());
    cfg.paths.crop_allowlist = Some("crops.csv".into());
    cfg.model.n_trees = 50;
    cfg.evaluate.regions = vec![
        Region {
            name: "Zambia".into(),
            country: "ZMB".into(),
            epsg: "EPSG:32735".parse().expect("supported"),
        },
        Region {
            name: "Malawi".into(),
            country: "MWI".into(),
            epsg: "EPSG:32735".parse().expect("supported"),
        },
    ];
    let path = dir.join("pipeline.toml");
    fs::write(&path, cfg.to_toml()).map_err(io(&path))?;
    Ok(path)
}

/// Field layout of `write_fixture(dir, seed)`, without writing anything.
pub fn fixture_fields(seed: u64) -> Vec<FixtureField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2).flat_map(|tile| layout_fields(tile, &mut rng)).collect()
}
