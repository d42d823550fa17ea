//! Seasonal median compositing and crop-calendar season windows.

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GridSpec, MultiRaster, Raster};

/// B02, B03, B04, B08.
pub const BAND_COUNT: usize = 4;

pub const DEFAULT_CLOUD_THRESHOLD: f64 = 0.20;
pub const DEFAULT_BRACKET_DAYS: i64 = 30;

/// Scene-classification classes treated as unusable: saturated/defective,
/// cloud shadow, cloud medium and high probability, thin cirrus, snow/ice.
pub const MASKED_SCL: [u8; 6] = [1, 3, 8, 9, 10, 11];

#[derive(Debug, Clone)]
pub struct Scene {
    pub acquisition_date: NaiveDate,
    /// Four reflectance bands; NaN marks missing observations.
    pub bands: MultiRaster<f64>,
    pub scl: Raster<u8>,
    pub cloud_fraction: f64,
}

impl Scene {
    pub fn new(acquisition_date: NaiveDate, bands: MultiRaster<f64>, scl: Raster<u8>, cloud_fraction: f64) -> Result<Self> {
        if bands.band_count() != BAND_COUNT {
            return Err(Error::InvalidInput(format!(
                "scene has {} bands, expected {BAND_COUNT}",
                bands.band_count()
            )));
        }
        bands.grid.ensure_same(&scl.grid, "scene bands vs SCL")?;
        if !(0.0..=1.0).contains(&cloud_fraction) {
            return Err(Error::InvalidInput(format!("cloud fraction {cloud_fraction} outside [0, 1]")));
        }
        Ok(Scene {
            acquisition_date,
            bands,
            scl,
            cloud_fraction,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Composite {
    /// Per-band medians; NaN where no observation survived.
    pub raster: MultiRaster<f64>,
    pub scenes_used: usize,
    /// Every scene was rejected by the cloud filter.
    pub all_excluded: bool,
}

/// Median of a non-empty slice; even counts average the middle pair.
/// The slice is reordered.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per-pixel, per-band median over scenes with `cloud_fraction <
/// cloud_threshold`, skipping observations whose SCL class is masked.
pub fn median_composite(scenes: &[Scene], cloud_threshold: f64) -> Result<Composite> {
    let first = scenes
        .first()
        .ok_or_else(|| Error::InvalidInput("median composite needs at least one scene".into()))?;
    let grid = first.bands.grid;
    for s in scenes {
        grid.ensure_same(&s.bands.grid, "composite scenes")?;
    }
    let kept: Vec<&Scene> = scenes.iter().filter(|s| s.cloud_fraction < cloud_threshold).collect();
    let all_excluded = kept.is_empty();
    if all_excluded {
        tracing::warn!(scenes = scenes.len(), cloud_threshold, "every scene exceeds the cloud threshold");
    }

    let mut bands = vec![vec![f64::NAN; grid.len()]; BAND_COUNT];
    let mut obs = Vec::with_capacity(kept.len());
    for i in 0..grid.len() {
        for (b, out) in bands.iter_mut().enumerate() {
            obs.clear();
            obs.extend(
                kept.iter()
                    .filter(|s| !MASKED_SCL.contains(&s.scl.data[i]))
                    .map(|s| s.bands.bands[b][i])
                    .filter(|v| !v.is_nan()),
            );
            if !obs.is_empty() {
                out[i] = median_in_place(&mut obs);
            }
        }
    }
    Ok(Composite {
        raster: MultiRaster {
            grid,
            bands,
            nodata: Some(f64::NAN),
        },
        scenes_used: kept.len(),
        all_excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonKind {
    Planting,
    Harvest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub kind: SeasonKind,
}

impl SeasonWindow {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

fn day_of_year(year: i32, doy: i64) -> NaiveDate {
    NaiveDate::from_yo_opt(year, 1).expect("valid year") + Duration::days(doy - 1)
}

fn bracket(year: i32, doy: f64, bracket_days: i64, kind: SeasonKind) -> SeasonWindow {
    let center = doy.round() as i64;
    SeasonWindow {
        start: day_of_year(year, center - bracket_days),
        end: day_of_year(year, center + bracket_days),
        kind,
    }
}

/// Planting and harvest windows of `±bracket_days` around the start and end
/// of season sampled at the tile centroid. Day counts past the end of the
/// year roll into the next one.
pub fn season_windows(
    sos: &Raster<f64>,
    eos: &Raster<f64>,
    centroid: (f64, f64),
    bracket_days: i64,
    year: i32,
) -> Result<(SeasonWindow, SeasonWindow)> {
    let (lon, lat) = centroid;
    let valid = |v: f64| v.is_finite() && (1.0..=366.0).contains(&v);
    let s = sos.sample(lon, lat).filter(|v| valid(*v));
    let e = eos.sample(lon, lat).filter(|v| valid(*v));
    match (s, e) {
        (Some(s), Some(e)) => Ok((
            bracket(year, s, bracket_days, SeasonKind::Planting),
            bracket(year, e, bracket_days, SeasonKind::Harvest),
        )),
        _ => Err(Error::CalendarNodata { lon, lat }),
    }
}

/// Hemispheric default: April-May planting and August-September harvest in
/// the north, shifted by six months in the south.
pub fn fallback_windows(lat: f64, year: i32) -> (SeasonWindow, SeasonWindow) {
    let d = |y: i32, m: u32, day: u32| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
    let last = |y: i32, m: u32| {
        let next = if m == 12 { d(y + 1, 1, 1) } else { d(y, m + 1, 1) };
        next - Duration::days(1)
    };
    if lat >= 0.0 {
        (
            SeasonWindow {
                start: d(year, 4, 1),
                end: last(year, 5),
                kind: SeasonKind::Planting,
            },
            SeasonWindow {
                start: d(year, 8, 1),
                end: last(year, 9),
                kind: SeasonKind::Harvest,
            },
        )
    } else {
        (
            SeasonWindow {
                start: d(year, 10, 1),
                end: last(year, 11),
                kind: SeasonKind::Planting,
            },
            SeasonWindow {
                start: d(year + 1, 2, 1),
                end: last(year + 1, 3),
                kind: SeasonKind::Harvest,
            },
        )
    }
}

/// [`season_windows`] falling back to [`fallback_windows`] on calendar gaps.
/// The flag reports whether the fallback was used.
pub fn season_windows_or_fallback(
    sos: &Raster<f64>,
    eos: &Raster<f64>,
    centroid: (f64, f64),
    bracket_days: i64,
    year: i32,
) -> ((SeasonWindow, SeasonWindow), bool) {
    match season_windows(sos, eos, centroid, bracket_days, year) {
        Ok(w) => (w, false),
        Err(_) => {
            tracing::warn!(lon = centroid.0, lat = centroid.1, "crop calendar gap, using hemispheric default");
            (fallback_windows(centroid.1, year), true)
        }
    }
}

/// One line of a scene manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// 4-band digital-number GeoTIFF (B02, B03, B04, B08).
    pub path: PathBuf,
    pub date: NaiveDate,
    pub cloud_fraction: f64,
    pub scl_path: PathBuf,
}

/// Reads a CSV manifest with header `path,date,cloud_fraction,scl_path`.
/// Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse("manifest", path, e))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<ManifestRecord>() {
        let mut rec = rec.map_err(|e| Error::parse("manifest", path, e))?;
        if rec.path.is_relative() {
            rec.path = base.join(&rec.path);
        }
        if rec.scl_path.is_relative() {
            rec.scl_path = base.join(&rec.scl_path);
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse("manifest", path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::parse("manifest", path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a manifest scene; DN value 0 is treated as missing.
pub fn load_scene(rec: &ManifestRecord) -> Result<Scene> {
    let dn = crate::raster::cog::read_cog::<u16>(&rec.path)?;
    let scl = crate::raster::cog::read_raster::<u8>(&rec.scl_path)?;
    let bands = dn
        .bands
        .iter()
        .map(|b| b.iter().map(|&v| if v == 0 { f64::NAN } else { f64::from(v) }).collect())
        .collect();
    Scene::new(
        rec.date,
        MultiRaster::new(dn.grid, bands, Some(f64::NAN))?,
        scl,
        rec.cloud_fraction,
    )
}

/// Rounds a digital-number composite back to `u16`, 0 marking nodata.
pub fn composite_to_dn(c: &MultiRaster<f64>) -> MultiRaster<u16> {
    MultiRaster {
        grid: c.grid,
        bands: c
            .bands
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&v| if v.is_nan() { 0 } else { v.round().clamp(1.0, 65535.0) as u16 })
                    .collect()
            })
            .collect(),
        nodata: Some(0),
    }
}

/// Centre of a grid in its own coordinates.
pub fn grid_centroid(g: &GridSpec) -> (f64, f64) {
    (0.5 * (g.min_lon + g.max_lon), 0.5 * (g.min_lat + g.max_lat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Datelike;

    fn grid(n: usize) -> GridSpec {
        GridSpec::from_origin(28.0, -14.0, 1.0 / 12_000.0, n, 1).unwrap()
    }

    fn scene(vals: &[f64], scl: &[u8], cloud: f64) -> Scene {
        let g = grid(vals.len());
        let bands = (0..BAND_COUNT)
            .map(|b| vals.iter().map(|v| v + b as f64).collect())
            .collect();
        Scene::new(
            NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
            MultiRaster::new(g, bands, Some(f64::NAN)).unwrap(),
            Raster::new(g, scl.to_vec(), None).unwrap(),
            cloud,
        )
        .unwrap()
    }

    #[test]
    fn single_scene_is_identity() {
        let s = scene(&[0.1, 0.5, 0.9], &[4, 4, 4], 0.0);
        let c = median_composite(std::slice::from_ref(&s), 0.2).unwrap();
        assert_eq!(c.raster.bands, s.bands.bands);
    }

    #[test]
    fn odd_median() {
        let scenes: Vec<Scene> = [0.1, 0.2, 0.9].iter().map(|&v| scene(&[v], &[4], 0.0)).collect();
        let c = median_composite(&scenes, 0.2).unwrap();
        assert_eq!(c.raster.bands[0][0], 0.2);
    }

    #[test]
    fn even_median_after_scl_mask() {
        let scenes = vec![
            scene(&[0.1], &[4], 0.0),
            scene(&[0.5], &[9], 0.0),
            scene(&[0.3], &[5], 0.0),
        ];
        let c = median_composite(&scenes, 0.2).unwrap();
        // oracle: sort the unmasked list and average the middle pair
        let mut kept = [0.1, 0.3];
        kept.sort_by(f64::total_cmp);
        assert_eq!(c.raster.bands[0][0], (kept[0] + kept[1]) / 2.0);
        assert_eq!(c.raster.bands[0][0], 0.2);
    }

    #[test]
    fn cloudy_scenes_are_excluded() {
        let scenes = vec![scene(&[0.1], &[4], 0.0), scene(&[0.9], &[4], 0.2)];
        let c = median_composite(&scenes, 0.2).unwrap();
        assert_eq!(c.scenes_used, 1);
        assert_eq!(c.raster.bands[0][0], 0.1);
    }

    #[test]
    fn all_excluded_gives_nodata() {
        let scenes = vec![scene(&[0.1, 0.2], &[4, 4], 0.5)];
        let c = median_composite(&scenes, 0.2).unwrap();
        assert!(c.all_excluded);
        assert!(c.raster.bands.iter().flatten().all(|v| v.is_nan()));
    }

    #[test]
    fn fully_masked_pixel_is_nodata() {
        let c = median_composite(&[scene(&[0.1, 0.2], &[8, 4], 0.0)], 0.2).unwrap();
        assert!(c.raster.bands[0][0].is_nan());
        assert_eq!(c.raster.bands[0][1], 0.2);
    }

    fn calendar(v: f64) -> Raster<f64> {
        let g = GridSpec::from_origin(27.5, -13.5, 0.5, 2, 2).unwrap();
        Raster::filled(g, v, Some(f64::NAN))
    }

    #[test]
    fn planting_window_brackets_sos() {
        let (p, h) = season_windows(&calendar(100.0), &calendar(200.0), (28.1, -14.1), 30, 2025).unwrap();
        assert_eq!(p.start.ordinal(), 70);
        assert_eq!(p.end.ordinal(), 130);
        assert_eq!(h.start.ordinal(), 170);
        assert_eq!(p.kind, SeasonKind::Planting);
    }

    #[test]
    fn harvest_window_wraps_year() {
        let (_, h) = season_windows(&calendar(100.0), &calendar(350.0), (28.1, -14.1), 30, 2025).unwrap();
        assert_eq!(h.start, NaiveDate::from_yo_opt(2025, 320).unwrap());
        assert_eq!(h.end, NaiveDate::from_ymd_opt(2026, 1, 15).unwrap());
    }

    #[test]
    fn calendar_gap_falls_back() {
        let err = season_windows(&calendar(f64::NAN), &calendar(200.0), (28.1, -14.1), 30, 2025);
        assert!(matches!(err, Err(Error::CalendarNodata { .. })));
        let ((p, h), used) = season_windows_or_fallback(&calendar(f64::NAN), &calendar(200.0), (28.1, -14.1), 30, 2025);
        assert!(used);
        assert_eq!(p.start, NaiveDate::from_ymd_opt(2025, 10, 1).unwrap());
        assert_eq!(h.end, NaiveDate::from_ymd_opt(2026, 3, 31).unwrap());
        let (n, _) = fallback_windows(45.0, 2025);
        assert_eq!((n.start.month(), n.end.month(), n.end.day()), (4, 5, 31));
    }
}
