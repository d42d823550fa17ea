//! Cloud-Optimized GeoTIFF output and GeoTIFF input.
//!
//! The writer emits little-endian classic TIFF with 256x256 deflate tiles,
//! pixel-interleaved bands and a chain of 2x nearest-neighbour overviews.
//! All IFDs precede the tile data, and overview tiles are stored smallest
//! level first, which is the layout COG readers expect. Georeferencing uses
//! `ModelPixelScale` + `ModelTiepoint` + a minimal GeoKey directory; nodata
//! goes into the GDAL nodata tag (42113).
//!
//! Reading goes through the `tiff` crate and accepts any strip or tile
//! layout it can decode.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::tags::Tag;

use crate::error::{Error, Result};

use super::{GridSpec, MultiRaster, Raster, Sample, EPSG_WGS84};

pub const TILE_SIZE: usize = 256;

const TAG_NEW_SUBFILE_TYPE: u16 = 254;
const TAG_IMAGE_WIDTH: u16 = 256;
const TAG_IMAGE_LENGTH: u16 = 257;
const TAG_BITS_PER_SAMPLE: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_SAMPLES_PER_PIXEL: u16 = 277;
const TAG_PLANAR_CONFIG: u16 = 284;
const TAG_TILE_WIDTH: u16 = 322;
const TAG_TILE_LENGTH: u16 = 323;
const TAG_TILE_OFFSETS: u16 = 324;
const TAG_TILE_BYTE_COUNTS: u16 = 325;
const TAG_EXTRA_SAMPLES: u16 = 338;
const TAG_SAMPLE_FORMAT: u16 = 339;
const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;
const TAG_GEO_KEY_DIRECTORY: u16 = 34735;
const TAG_GDAL_NODATA: u16 = 42113;

const TYPE_ASCII: u16 = 2;
const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;
const TYPE_DOUBLE: u16 = 12;

const COMPRESSION_DEFLATE: u16 = 8;

/// Sample types that can be stored in a COG band.
pub trait CogSample: Sample {
    const BITS: u16;
    /// TIFF SampleFormat: 1 unsigned, 2 signed, 3 IEEE float.
    const FORMAT: u16;
    fn put_le(self, out: &mut Vec<u8>);
    fn from_decoded(d: DecodingResult) -> Option<Vec<Self>>;
    fn nodata_text(self) -> String;
    fn parse_nodata(s: &str) -> Option<Self>;
    fn zero() -> Self;
}

macro_rules! cog_int {
    ($t:ty, $bits:expr, $fmt:expr, $variant:ident) => {
        impl CogSample for $t {
            const BITS: u16 = $bits;
            const FORMAT: u16 = $fmt;
            fn put_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn from_decoded(d: DecodingResult) -> Option<Vec<Self>> {
                match d {
                    DecodingResult::$variant(v) => Some(v),
                    _ => None,
                }
            }
            fn nodata_text(self) -> String {
                self.to_string()
            }
            fn parse_nodata(s: &str) -> Option<Self> {
                s.trim().parse::<f64>().ok().map(|v| v as $t)
            }
            fn zero() -> Self {
                0
            }
        }
    };
}

cog_int!(u8, 8, 1, U8);
cog_int!(u16, 16, 1, U16);
cog_int!(u32, 32, 1, U32);
cog_int!(i16, 16, 2, I16);
cog_int!(i32, 32, 2, I32);

macro_rules! cog_float {
    ($t:ty, $bits:expr, $variant:ident) => {
        impl CogSample for $t {
            const BITS: u16 = $bits;
            const FORMAT: u16 = 3;
            fn put_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn from_decoded(d: DecodingResult) -> Option<Vec<Self>> {
                match d {
                    DecodingResult::$variant(v) => Some(v),
                    _ => None,
                }
            }
            fn nodata_text(self) -> String {
                if self.is_nan() {
                    "nan".to_string()
                } else {
                    format!("{:?}", self)
                }
            }
            fn parse_nodata(s: &str) -> Option<Self> {
                let s = s.trim();
                if s.eq_ignore_ascii_case("nan") {
                    Some(<$t>::NAN)
                } else {
                    s.parse::<$t>().ok()
                }
            }
            fn zero() -> Self {
                0.0
            }
        }
    };
}

cog_float!(f32, 32, F32);
cog_float!(f64, 64, F64);

struct Entry {
    tag: u16,
    typ: u16,
    count: u32,
    data: Vec<u8>,
}

impl Entry {
    fn shorts(tag: u16, v: &[u16]) -> Self {
        Entry {
            tag,
            typ: TYPE_SHORT,
            count: v.len() as u32,
            data: v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn longs(tag: u16, v: &[u32]) -> Self {
        Entry {
            tag,
            typ: TYPE_LONG,
            count: v.len() as u32,
            data: v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn doubles(tag: u16, v: &[f64]) -> Self {
        Entry {
            tag,
            typ: TYPE_DOUBLE,
            count: v.len() as u32,
            data: v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn ascii(tag: u16, s: &str) -> Self {
        let mut data = s.as_bytes().to_vec();
        data.push(0);
        Entry {
            tag,
            typ: TYPE_ASCII,
            count: data.len() as u32,
            data,
        }
    }

    fn out_of_line(&self) -> usize {
        if self.data.len() > 4 {
            self.data.len() + self.data.len() % 2
        } else {
            0
        }
    }
}

struct Level<T> {
    width: usize,
    height: usize,
    /// Pixel-interleaved samples.
    pixels: Vec<T>,
}

impl<T: CogSample> Level<T> {
    fn downsample(&self) -> Level<T> {
        let (w, h) = (self.width.div_ceil(2), self.height.div_ceil(2));
        let n = self.pixels.len() / (self.width * self.height);
        let mut pixels = Vec::with_capacity(w * h * n);
        for r in 0..h {
            for c in 0..w {
                let src = ((2 * r) * self.width + 2 * c) * n;
                pixels.extend_from_slice(&self.pixels[src..src + n]);
            }
        }
        Level {
            width: w,
            height: h,
            pixels,
        }
    }

    fn tiles(&self, bands: usize, fill: T) -> Result<Vec<Vec<u8>>> {
        let tx = self.width.div_ceil(TILE_SIZE);
        let ty = self.height.div_ceil(TILE_SIZE);
        let mut out = Vec::with_capacity(tx * ty);
        let mut raw = Vec::with_capacity(TILE_SIZE * TILE_SIZE * bands * (T::BITS as usize / 8));
        for tr in 0..ty {
            for tc in 0..tx {
                raw.clear();
                for r in tr * TILE_SIZE..(tr + 1) * TILE_SIZE {
                    for c in tc * TILE_SIZE..(tc + 1) * TILE_SIZE {
                        for b in 0..bands {
                            let v = if r < self.height && c < self.width {
                                self.pixels[(r * self.width + c) * bands + b]
                            } else {
                                fill
                            };
                            v.put_le(&mut raw);
                        }
                    }
                }
                let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(6));
                enc.write_all(&raw).map_err(|e| Error::io("<deflate>", e))?;
                out.push(enc.finish().map_err(|e| Error::io("<deflate>", e))?);
            }
        }
        Ok(out)
    }
}

fn geo_keys(crs: u32) -> Vec<u16> {
    if crs == EPSG_WGS84 || crs == 4258 || crs == 4269 {
        // GTModelType=Geographic, GTRasterType=PixelIsArea, GeographicType
        vec![1, 1, 0, 3, 1024, 0, 1, 2, 1025, 0, 1, 1, 2048, 0, 1, crs as u16]
    } else {
        // GTModelType=Projected, GTRasterType=PixelIsArea, ProjectedCSType
        vec![1, 1, 0, 3, 1024, 0, 1, 1, 1025, 0, 1, 1, 3072, 0, 1, crs as u16]
    }
}

/// Encode a multi-band raster as COG bytes.
pub fn encode_cog<T: CogSample>(raster: &MultiRaster<T>) -> Result<Vec<u8>> {
    let bands = raster.band_count();
    let (w, h) = (raster.grid.width, raster.grid.height);
    let mut pixels = Vec::with_capacity(w * h * bands);
    for i in 0..w * h {
        for b in &raster.bands {
            pixels.push(b[i]);
        }
    }
    let mut levels = vec![Level {
        width: w,
        height: h,
        pixels,
    }];
    while levels.last().is_some_and(|l| l.width.max(l.height) > TILE_SIZE) {
        let next = levels.last().map(Level::downsample).expect("non-empty");
        levels.push(next);
    }
    let fill = raster.nodata.unwrap_or_else(T::zero);
    let tiles: Vec<Vec<Vec<u8>>> = levels.iter().map(|l| l.tiles(bands, fill)).collect::<Result<_>>()?;

    let build_entries = |li: usize, offsets: &[u32], counts: &[u32]| -> Vec<Entry> {
        let l = &levels[li];
        let mut e = Vec::new();
        if li > 0 {
            e.push(Entry::longs(TAG_NEW_SUBFILE_TYPE, &[1]));
        }
        e.push(Entry::longs(TAG_IMAGE_WIDTH, &[l.width as u32]));
        e.push(Entry::longs(TAG_IMAGE_LENGTH, &[l.height as u32]));
        e.push(Entry::shorts(TAG_BITS_PER_SAMPLE, &vec![T::BITS; bands]));
        e.push(Entry::shorts(TAG_COMPRESSION, &[COMPRESSION_DEFLATE]));
        e.push(Entry::shorts(TAG_PHOTOMETRIC, &[1]));
        e.push(Entry::shorts(TAG_SAMPLES_PER_PIXEL, &[bands as u16]));
        e.push(Entry::shorts(TAG_PLANAR_CONFIG, &[1]));
        e.push(Entry::shorts(TAG_TILE_WIDTH, &[TILE_SIZE as u16]));
        e.push(Entry::shorts(TAG_TILE_LENGTH, &[TILE_SIZE as u16]));
        e.push(Entry::longs(TAG_TILE_OFFSETS, offsets));
        e.push(Entry::longs(TAG_TILE_BYTE_COUNTS, counts));
        if bands > 1 {
            e.push(Entry::shorts(TAG_EXTRA_SAMPLES, &vec![0; bands - 1]));
        }
        e.push(Entry::shorts(TAG_SAMPLE_FORMAT, &vec![T::FORMAT; bands]));
        if li == 0 {
            let g = &raster.grid;
            e.push(Entry::doubles(
                TAG_MODEL_PIXEL_SCALE,
                &[g.pixel_width(), g.pixel_height(), 0.0],
            ));
            e.push(Entry::doubles(
                TAG_MODEL_TIEPOINT,
                &[0.0, 0.0, 0.0, g.min_lon, g.max_lat, 0.0],
            ));
            e.push(Entry::shorts(TAG_GEO_KEY_DIRECTORY, &geo_keys(g.crs)));
        }
        if let Some(nd) = raster.nodata {
            e.push(Entry::ascii(TAG_GDAL_NODATA, &nd.nodata_text()));
        }
        e
    };

    // Pass 1: IFD sizes with placeholder offsets.
    let ifd_size = |entries: &[Entry]| 2 + 12 * entries.len() + 4 + entries.iter().map(Entry::out_of_line).sum::<usize>();
    let mut ifd_starts = Vec::with_capacity(levels.len());
    let mut pos = 8usize;
    for (li, t) in tiles.iter().enumerate() {
        let zeros = vec![0u32; t.len()];
        ifd_starts.push(pos);
        pos += ifd_size(&build_entries(li, &zeros, &zeros));
    }
    // Tile data, smallest overview first.
    let mut tile_offsets: Vec<Vec<u32>> = vec![Vec::new(); levels.len()];
    for li in (0..levels.len()).rev() {
        for t in &tiles[li] {
            tile_offsets[li].push(u32::try_from(pos).map_err(|_| too_big())?);
            pos += t.len();
        }
    }
    if pos > u32::MAX as usize {
        return Err(too_big());
    }

    // Pass 2: emit.
    let mut out = Vec::with_capacity(pos);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&(ifd_starts[0] as u32).to_le_bytes());
    for li in 0..levels.len() {
        let counts: Vec<u32> = tiles[li].iter().map(|t| t.len() as u32).collect();
        let entries = build_entries(li, &tile_offsets[li], &counts);
        debug_assert_eq!(out.len(), ifd_starts[li]);
        let mut extra_pos = ifd_starts[li] + 2 + 12 * entries.len() + 4;
        let mut extra = Vec::new();
        out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
        for e in &entries {
            out.extend_from_slice(&e.tag.to_le_bytes());
            out.extend_from_slice(&e.typ.to_le_bytes());
            out.extend_from_slice(&e.count.to_le_bytes());
            if e.data.len() <= 4 {
                let mut inline = [0u8; 4];
                inline[..e.data.len()].copy_from_slice(&e.data);
                out.extend_from_slice(&inline);
            } else {
                out.extend_from_slice(&(extra_pos as u32).to_le_bytes());
                extra.extend_from_slice(&e.data);
                if e.data.len() % 2 == 1 {
                    extra.push(0);
                }
                extra_pos += e.out_of_line();
            }
        }
        let next = ifd_starts.get(li + 1).copied().unwrap_or(0) as u32;
        out.extend_from_slice(&next.to_le_bytes());
        out.extend_from_slice(&extra);
    }
    for li in (0..levels.len()).rev() {
        for t in &tiles[li] {
            out.extend_from_slice(t);
        }
    }
    debug_assert_eq!(out.len(), pos);
    Ok(out)
}

fn too_big() -> Error {
    Error::InvalidInput("raster exceeds the 4 GiB classic TIFF limit".into())
}

pub fn write_cog<T: CogSample>(path: impl AsRef<Path>, raster: &MultiRaster<T>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cog(raster)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_raster<T: CogSample>(path: impl AsRef<Path>, raster: &Raster<T>) -> Result<()> {
    write_cog(path, &MultiRaster::from_single(raster.clone()))
}

/// Structural summary of a GeoTIFF file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CogInfo {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Full resolution plus overviews.
    pub levels: usize,
    pub tiled: bool,
    pub bits_per_sample: u16,
    /// TIFF SampleFormat: 1 unsigned, 2 signed, 3 IEEE float.
    pub sample_format: u16,
}

fn open(path: &Path) -> Result<Decoder<BufReader<File>>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Decoder::new(BufReader::new(f))
        .map(|d| d.with_limits(Limits::unlimited()))
        .map_err(|source| Error::Tiff {
            path: path.into(),
            source,
        })
}

pub fn inspect(path: impl AsRef<Path>) -> Result<CogInfo> {
    let path = path.as_ref();
    let tiff_err = |source| Error::Tiff {
        path: path.into(),
        source,
    };
    let mut d = open(path)?;
    let (w, h) = d.dimensions().map_err(tiff_err)?;
    let bands = d.find_tag_unsigned::<u16>(Tag::SamplesPerPixel).map_err(tiff_err)?.unwrap_or(1) as usize;
    let tiled = d.find_tag(Tag::TileWidth).map_err(tiff_err)?.is_some();
    let first_u16 = |v: Option<tiff::decoder::ifd::Value>| -> Result<Option<u16>> {
        Ok(v.map(|v| v.into_u16_vec()).transpose().map_err(tiff_err)?.and_then(|v| v.first().copied()))
    };
    let bits_per_sample = first_u16(d.find_tag(Tag::BitsPerSample).map_err(tiff_err)?)?.unwrap_or(1);
    let sample_format = first_u16(d.find_tag(Tag::SampleFormat).map_err(tiff_err)?)?.unwrap_or(1);
    let mut levels = 1;
    while d.more_images() {
        d.next_image().map_err(tiff_err)?;
        levels += 1;
    }
    Ok(CogInfo {
        width: w as usize,
        height: h as usize,
        bands,
        levels,
        tiled,
        bits_per_sample,
        sample_format,
    })
}

pub fn read_cog<T: CogSample>(path: impl AsRef<Path>) -> Result<MultiRaster<T>> {
    let path = path.as_ref();
    let tiff_err = |source| Error::Tiff {
        path: path.into(),
        source,
    };
    let mut d = open(path)?;
    let (w, h) = d.dimensions().map_err(tiff_err)?;
    let (w, h) = (w as usize, h as usize);
    let bands = d.find_tag_unsigned::<u16>(Tag::SamplesPerPixel).map_err(tiff_err)?.unwrap_or(1) as usize;
    let scale = d
        .find_tag(Tag::ModelPixelScaleTag)
        .map_err(tiff_err)?
        .ok_or_else(|| Error::parse("GeoTIFF", path, "missing ModelPixelScale"))?
        .into_f64_vec()
        .map_err(tiff_err)?;
    let tie = d
        .find_tag(Tag::ModelTiepointTag)
        .map_err(tiff_err)?
        .ok_or_else(|| Error::parse("GeoTIFF", path, "missing ModelTiepoint"))?
        .into_f64_vec()
        .map_err(tiff_err)?;
    if scale.len() < 2 || tie.len() < 6 {
        return Err(Error::parse("GeoTIFF", path, "short georeferencing tags"));
    }
    let keys = d
        .find_tag(Tag::GeoKeyDirectoryTag)
        .map_err(tiff_err)?
        .map(|v| v.into_u16_vec())
        .transpose()
        .map_err(tiff_err)?
        .unwrap_or_default();
    let crs = keys
        .chunks_exact(4)
        .skip(1)
        .find(|k| k[0] == 2048 || k[0] == 3072)
        .map(|k| k[3] as u32)
        .unwrap_or(EPSG_WGS84);
    let nodata = d
        .find_tag(Tag::GdalNodata)
        .map_err(tiff_err)?
        .map(|v| v.into_string())
        .transpose()
        .map_err(tiff_err)?
        .and_then(|s| T::parse_nodata(s.trim_end_matches('\0')));

    let (west, north) = (tie[3] - tie[0] * scale[0], tie[4] + tie[1] * scale[1]);
    let grid = GridSpec::new(
        west,
        west + scale[0] * w as f64,
        north - scale[1] * h as f64,
        north,
        w,
        h,
        crs,
    )?;
    let decoded = d.read_image().map_err(tiff_err)?;
    let pixels = T::from_decoded(decoded)
        .ok_or_else(|| Error::parse("GeoTIFF", path, "sample type does not match the requested type"))?;
    if pixels.len() != w * h * bands {
        return Err(Error::parse(
            "GeoTIFF",
            path,
            format!("decoded {} samples, expected {}", pixels.len(), w * h * bands),
        ));
    }
    let band_data = (0..bands)
        .map(|b| pixels.iter().skip(b).step_by(bands).copied().collect())
        .collect();
    MultiRaster::new(grid, band_data, nodata)
}

pub fn read_raster<T: CogSample>(path: impl AsRef<Path>) -> Result<Raster<T>> {
    let path = path.as_ref();
    let m = read_cog::<T>(path)?;
    if m.band_count() != 1 {
        return Err(Error::parse(
            "GeoTIFF",
            path,
            format!("expected one band, found {}", m.band_count()),
        ));
    }
    Ok(m.band(0))
}

/// Single-band raster of any supported sample type, widened to `f64`.
/// Nodata pixels become NaN.
pub fn read_raster_f64(path: impl AsRef<Path>) -> Result<Raster<f64>> {
    fn widen<T: CogSample + Into<f64>>(path: &Path) -> Result<Raster<f64>> {
        let r = read_raster::<T>(path)?;
        Ok(r.map(Some(f64::NAN), |v| if r.is_nodata(v) { f64::NAN } else { v.into() }))
    }
    let path = path.as_ref();
    let info = inspect(path)?;
    match (info.sample_format, info.bits_per_sample) {
        (1, 8) => widen::<u8>(path),
        (1, 16) => widen::<u16>(path),
        (1, 32) => widen::<u32>(path),
        (2, 16) => widen::<i16>(path),
        (2, 32) => widen::<i32>(path),
        (3, 32) => widen::<f32>(path),
        (3, 64) => widen::<f64>(path),
        (f, b) => Err(Error::parse("GeoTIFF", path, format!("unsupported sample format {f} with {b} bits"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::PIXEL_10M_DEG;

    #[test]
    fn any_sample_type_widens() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::from_origin(28.0, -14.0, 0.01, 3, 2).unwrap();
        let p = dir.path().join("a.tif");
        write_raster(&p, &Raster::new(g, vec![1i16, -2, 3, 255, 5, 6], Some(255)).unwrap()).unwrap();
        let r = read_raster_f64(&p).unwrap();
        assert_eq!(&r.data[..3], &[1.0, -2.0, 3.0]);
        assert!(r.data[3].is_nan());
        write_raster(&p, &Raster::new(g, vec![0.5f32; 6], None).unwrap()).unwrap();
        assert_eq!(read_raster_f64(&p).unwrap().data, vec![0.5; 6]);
        write_raster(&p, &Raster::new(g, vec![7u8; 6], None).unwrap()).unwrap();
        assert_eq!(inspect(&p).unwrap().bits_per_sample, 8);
        assert_eq!(read_raster_f64(&p).unwrap().data, vec![7.0; 6]);
    }

    #[test]
    fn round_trip_multiband_float() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tif");
        let g = GridSpec::from_origin(28.0, -14.0, PIXEL_10M_DEG, 300, 270).unwrap();
        let bands: Vec<Vec<f32>> = (0..3)
            .map(|b| (0..g.len()).map(|i| ((i * 7 + b) % 101) as f32 / 100.0).collect())
            .collect();
        let mut m = MultiRaster::new(g, bands, Some(f32::NAN)).unwrap();
        m.bands[1][5] = f32::NAN;
        write_cog(&path, &m).unwrap();

        let info = inspect(&path).unwrap();
        assert_eq!(info.bands, 3);
        assert!(info.tiled);
        assert_eq!(info.levels, 2);

        let back = read_cog::<f32>(&path).unwrap();
        assert!(back.grid.same_as(&g));
        assert!(back.nodata.unwrap().is_nan());
        for b in 0..3 {
            for (x, y) in back.bands[b].iter().zip(&m.bands[b]) {
                assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
    }

    #[test]
    fn round_trip_integer_types_and_crs() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = GridSpec::from_origin(500_000.0, 8_450_000.0, 10.0, 5, 3).unwrap();
        g.crs = 32735;
        let r = Raster::new(g, (0..15).map(|i| i as i32 - 7).collect(), Some(-9999)).unwrap();
        let p = dir.path().join("i.tif");
        write_raster(&p, &r).unwrap();
        let back = read_raster::<i32>(&p).unwrap();
        assert_eq!(back.data, r.data);
        assert_eq!(back.nodata, Some(-9999));
        assert_eq!(back.grid.crs, 32735);

        let r8 = Raster::new(g, vec![2u8; 15], Some(255)).unwrap();
        write_raster(&p, &r8).unwrap();
        assert_eq!(read_raster::<u8>(&p).unwrap().data, r8.data);
        // wrong type is a parse error, not a panic
        assert!(matches!(read_raster::<f32>(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn encoding_is_deterministic() {
        let g = GridSpec::from_origin(0.0, 1.0, 0.001, 600, 300).unwrap();
        let r = Raster::new(g, (0..g.len()).map(|i| (i % 3) as u8).collect(), None).unwrap();
        let m = MultiRaster::from_single(r);
        assert_eq!(encode_cog(&m).unwrap(), encode_cog(&m).unwrap());
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tif");
        std::fs::write(&p, b"not a tiff").unwrap();
        assert!(read_raster::<u8>(&p).is_err());
    }
}
