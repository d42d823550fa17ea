use crate::error::{Error, Result};

use super::{GridSpec, Raster, Sample};

#[derive(Debug, Clone)]
pub struct Resampled<T> {
    pub raster: Raster<T>,
    /// Set when the source and destination extents do not overlap at all;
    /// the raster is then entirely nodata.
    pub disjoint: bool,
}

/// Nearest-neighbour resampling: each destination pixel takes the value of
/// the source pixel containing its centre. Destination pixels outside the
/// source, or on source nodata, become `fill`.
///
/// `fill` is also recorded as the output nodata value.
pub fn resample_nearest<T: Sample>(src: &Raster<T>, dst: &GridSpec, fill: T) -> Result<Resampled<T>> {
    if src.grid.crs != dst.crs {
        return Err(Error::GridMismatch(format!(
            "no transform from EPSG:{} to EPSG:{}",
            src.grid.crs, dst.crs
        )));
    }
    let (sw, sh) = (src.grid.pixel_width(), src.grid.pixel_height());
    let (dw, dh) = (dst.pixel_width(), dst.pixel_height());

    // Column lookup is shared by every destination row.
    let col_map: Vec<Option<usize>> = (0..dst.width)
        .map(|c| {
            let x = ((dst.min_lon - src.grid.min_lon) + (c as f64 + 0.5) * dw) / sw;
            (x >= 0.0 && x < src.grid.width as f64).then(|| x.floor() as usize)
        })
        .collect();
    let row_map: Vec<Option<usize>> = (0..dst.height)
        .map(|r| {
            let y = ((src.grid.max_lat - dst.max_lat) + (r as f64 + 0.5) * dh) / sh;
            (y >= 0.0 && y < src.grid.height as f64).then(|| y.floor() as usize)
        })
        .collect();

    let disjoint = col_map.iter().all(Option::is_none) || row_map.iter().all(Option::is_none);
    if disjoint {
        tracing::warn!(?dst, "resample: source and destination extents are disjoint");
    }

    let mut data = Vec::with_capacity(dst.len());
    for sr in &row_map {
        for sc in &col_map {
            let v = match (sr, sc) {
                (Some(r), Some(c)) => {
                    let v = src.get(*r, *c);
                    if src.is_nodata(v) {
                        fill
                    } else {
                        v
                    }
                }
                _ => fill,
            };
            data.push(v);
        }
    }
    Ok(Resampled {
        raster: Raster {
            grid: *dst,
            data,
            nodata: Some(fill),
        },
        disjoint,
    })
}
