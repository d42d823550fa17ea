//! Overlapping-patch inference and Gaussian-weighted stitching.
//!
//! A tile is cut into 256x256 windows overlapping by 64 pixels (stride 192),
//! with the last window in each axis snapped to the tile edge. Each window's
//! 3-class probabilities are blended with an unnormalized Gaussian weight
//! (sigma = 64) and the stitched map is argmaxed into class labels.

mod backend;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GridSpec, ProbabilityRaster, Raster, NODATA_TRIPLE};

pub use backend::{Backend, LinearBackend, SegmentationBackend, SyntheticBackend};

pub const PATCH_SIZE: usize = 256;
pub const PATCH_OVERLAP: usize = 64;
pub const PATCH_STRIDE: usize = PATCH_SIZE - PATCH_OVERLAP;
pub const KERNEL_SIGMA: f64 = 0.25 * PATCH_SIZE as f64;
/// Two seasons of B02, B03, B04, B08.
pub const PATCH_CHANNELS: usize = 8;

pub const DEFAULT_BOA_OFFSET: i32 = -1000;
pub const REFLECTANCE_SCALE: f64 = 10_000.0;

pub const CLASS_BACKGROUND: u8 = 0;
pub const CLASS_FIELD: u8 = 1;
pub const CLASS_BOUNDARY: u8 = 2;
pub const CLASS_NODATA: u8 = 255;

/// Channel-major 8 x 256 x 256 reflectance patch.
pub type Patch = Vec<f32>;
/// Row-major 256 x 256 probability triples.
pub type PatchProbs = Vec<[f64; 3]>;

/// Digital numbers to surface reflectance: `(dn + offset) / 10000`,
/// clamped to `[0, upper]`.
pub fn normalize_patch(dn: &[u16], boa_offset: i32, upper: f64) -> Vec<f32> {
    dn.iter()
        .map(|&v| ((f64::from(v) + f64::from(boa_offset)) / REFLECTANCE_SCALE).clamp(0.0, upper) as f32)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchWindow {
    pub row_off: usize,
    pub col_off: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPlan {
    pub windows: Vec<PatchWindow>,
    /// (height, width)
    pub tile_dims: (usize, usize),
}

/// Window offsets along one axis: stride 192, then a final window flush
/// with the far edge if the strided ones fall short.
pub fn axis_offsets(dim: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..)
        .map(|k| k * PATCH_STRIDE)
        .take_while(|off| off + PATCH_SIZE <= dim)
        .collect();
    if let Some(&last) = v.last() {
        if last + PATCH_SIZE < dim {
            v.push(dim - PATCH_SIZE);
        }
    }
    v
}

pub fn plan_patches(tile_dims: (usize, usize)) -> Result<PatchPlan> {
    let (h, w) = tile_dims;
    if h < PATCH_SIZE || w < PATCH_SIZE {
        return Err(Error::TileTooSmall {
            height: h,
            width: w,
            patch: PATCH_SIZE,
        });
    }
    let rows = axis_offsets(h);
    let cols = axis_offsets(w);
    let windows = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| PatchWindow { row_off: r, col_off: c }))
        .collect();
    Ok(PatchPlan { windows, tile_dims })
}

/// Unnormalized 2-D Gaussian, `size x size`, row-major, peak 1 at the centre
/// `(size - 1) / 2`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let mu = (size as f64 - 1.0) / 2.0;
    let axis: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - mu;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    // exp(a + b) = exp(a) exp(b): separable, and exactly symmetric.
    let mut k = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            k.push(axis[r] * axis[c]);
        }
    }
    k
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Weighted-probability and weight accumulators for one tile.
pub struct Accumulator {
    height: usize,
    width: usize,
    kernel: Vec<f64>,
    probs: Vec<[KahanSum; 3]>,
    weight: Vec<KahanSum>,
}

impl Accumulator {
    pub fn new(tile_dims: (usize, usize)) -> Self {
        let (height, width) = tile_dims;
        Accumulator {
            height,
            width,
            kernel: gaussian_kernel(PATCH_SIZE, KERNEL_SIGMA),
            probs: vec![[KahanSum::default(); 3]; height * width],
            weight: vec![KahanSum::default(); height * width],
        }
    }

    pub fn add(&mut self, window: PatchWindow, probs: &[[f64; 3]]) -> Result<()> {
        if probs.len() != PATCH_SIZE * PATCH_SIZE
            || window.row_off + PATCH_SIZE > self.height
            || window.col_off + PATCH_SIZE > self.width
        {
            return Err(Error::InvalidInput(format!(
                "patch at {window:?} does not fit the {}x{} tile",
                self.height, self.width
            )));
        }
        for r in 0..PATCH_SIZE {
            let row = (window.row_off + r) * self.width + window.col_off;
            for c in 0..PATCH_SIZE {
                let w = self.kernel[r * PATCH_SIZE + c];
                let p = probs[r * PATCH_SIZE + c];
                let acc = &mut self.probs[row + c];
                for k in 0..3 {
                    acc[k].add(w * p[k]);
                }
                self.weight[row + c].add(w);
            }
        }
        Ok(())
    }

    /// Weighted mean per pixel; pixels with zero accumulated weight are
    /// nodata.
    pub fn finish(self, grid: GridSpec) -> Result<ProbabilityRaster> {
        let data = self
            .probs
            .iter()
            .zip(&self.weight)
            .map(|(p, w)| {
                let w = w.value();
                if w > 0.0 {
                    [p[0].value() / w, p[1].value() / w, p[2].value() / w]
                } else {
                    NODATA_TRIPLE
                }
            })
            .collect();
        Raster::new(grid, data, None)
    }
}

/// Gaussian-weighted average of per-window probabilities. Every planned
/// window must have a patch; patches are accumulated in plan order.
pub fn stitch(patches: &[(PatchWindow, PatchProbs)], plan: &PatchPlan, grid: GridSpec) -> Result<ProbabilityRaster> {
    if (grid.height, grid.width) != plan.tile_dims {
        return Err(Error::GridMismatch(format!(
            "plan is for {:?}, grid is {}x{}",
            plan.tile_dims, grid.height, grid.width
        )));
    }
    let mut acc = Accumulator::new(plan.tile_dims);
    for w in &plan.windows {
        let (_, probs) = patches
            .iter()
            .find(|(pw, _)| pw == w)
            .ok_or(Error::MissingPatch {
                row_off: w.row_off,
                col_off: w.col_off,
            })?;
        acc.add(*w, probs)?;
    }
    acc.finish(grid)
}

/// Per-pixel argmax; ties go to the lowest class index.
pub fn argmax_classify(probs: &ProbabilityRaster) -> Raster<u8> {
    probs.map(Some(CLASS_NODATA), |p| {
        if p.iter().any(|v| v.is_nan()) {
            return CLASS_NODATA;
        }
        let mut best = 0;
        for k in 1..3 {
            if p[k] > p[best] {
                best = k;
            }
        }
        best as u8
    })
}

/// Cut the 8-channel reflectance patch for `w` out of a tile.
/// `tile` is channel-major with `h * w` values per channel.
pub fn extract_patch(tile: &[f32], dims: (usize, usize), w: PatchWindow) -> Patch {
    let (h, width) = dims;
    let plane = h * width;
    let mut out = Vec::with_capacity(PATCH_CHANNELS * PATCH_SIZE * PATCH_SIZE);
    for ch in 0..PATCH_CHANNELS {
        for r in 0..PATCH_SIZE {
            let start = ch * plane + (w.row_off + r) * width + w.col_off;
            out.extend_from_slice(&tile[start..start + PATCH_SIZE]);
        }
    }
    out
}

/// Run `backend` on every planned window (in parallel) and stitch.
/// The result does not depend on the number of worker threads.
pub fn predict_tile(
    backend: &dyn SegmentationBackend,
    tile: &[f32],
    grid: GridSpec,
) -> Result<ProbabilityRaster> {
    let dims = (grid.height, grid.width);
    if tile.len() != PATCH_CHANNELS * grid.len() {
        return Err(Error::InvalidInput(format!(
            "tile has {} values, expected {} channels of {}",
            tile.len(),
            PATCH_CHANNELS,
            grid.len()
        )));
    }
    let plan = plan_patches(dims)?;
    let patches: Vec<(PatchWindow, PatchProbs)> = plan
        .windows
        .par_iter()
        .map(|&w| {
            let probs = backend.predict(&extract_patch(tile, dims, w))?;
            check_probabilities(&probs, w)?;
            Ok((w, probs))
        })
        .collect::<Result<_>>()?;
    stitch(&patches, &plan, grid)
}

/// Backend output contract: one non-negative triple per pixel summing to
/// 1 within 1e-5.
fn check_probabilities(probs: &[[f64; 3]], w: PatchWindow) -> Result<()> {
    if probs.len() != PATCH_SIZE * PATCH_SIZE {
        return Err(Error::InvalidInput(format!(
            "backend returned {} pixels for window {w:?}",
            probs.len()
        )));
    }
    if let Some(bad) = probs
        .iter()
        .find(|p| p.iter().any(|&v| !(v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-5)
    {
        return Err(Error::InvalidInput(format!(
            "backend returned invalid probabilities {bad:?} for window {w:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        let r = normalize_patch(&[2000, 0, 11000], DEFAULT_BOA_OFFSET, 1.0);
        assert_eq!(r, vec![0.1, 0.0, 1.0]);
    }

    #[test]
    fn plans() {
        assert_eq!(plan_patches((256, 256)).unwrap().windows, vec![PatchWindow { row_off: 0, col_off: 0 }]);
        let p = plan_patches((448, 256)).unwrap();
        assert_eq!(p.windows.len(), 2);
        assert_eq!(axis_offsets(448), vec![0, 192]);
        assert!(matches!(plan_patches((255, 300)), Err(Error::TileTooSmall { .. })));
    }

    #[test]
    fn plan_500_matches_enumeration_oracle() {
        // oracle: every start in 0..=dim-256 that is a stride multiple, plus
        // an edge window if coverage is incomplete
        let dim = 500;
        let mut expect: Vec<usize> = (0..=dim - 256).filter(|o| o % 192 == 0).collect();
        let covered = expect.last().unwrap() + 256;
        if covered < dim {
            expect.push(dim - 256);
        }
        assert_eq!(axis_offsets(dim), expect);
        assert_eq!(expect, vec![0, 192, 244]);
        let plan = plan_patches((dim, dim)).unwrap();
        let mut cover = vec![0u32; dim * dim];
        for w in &plan.windows {
            for r in w.row_off..w.row_off + 256 {
                for c in w.col_off..w.col_off + 256 {
                    cover[r * dim + c] += 1;
                }
            }
        }
        assert!(cover.iter().all(|&n| n >= 1));
    }

    #[test]
    fn kernel_shape() {
        let k = gaussian_kernel(256, 64.0);
        let max = k.iter().cloned().fold(0.0, f64::max);
        assert!(k.iter().all(|&v| v > 0.0));
        // centre is between pixels 127 and 128; peak sits on those four
        assert_eq!(k[127 * 256 + 127], max);
        for r in 0..256 {
            for c in 0..256 {
                let v = k[r * 256 + c];
                assert_eq!(v, k[r * 256 + (255 - c)]);
                assert_eq!(v, k[(255 - r) * 256 + c]);
                assert_eq!(v, k[c * 256 + r]);
            }
        }
        let k3 = gaussian_kernel(3, 1.0);
        assert_eq!(k3[4], 1.0);
        assert!((k3[1] / k3[4] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k3[1] / k3[4] - 0.60653).abs() < 1e-5);
    }

    fn constant(p: [f64; 3]) -> PatchProbs {
        vec![p; PATCH_SIZE * PATCH_SIZE]
    }

    #[test]
    fn single_patch_is_exact() {
        let grid = GridSpec::from_origin(0.0, 1.0, 1.0 / 256.0, 256, 256).unwrap();
        let plan = plan_patches((256, 256)).unwrap();
        let probs: PatchProbs = (0..256 * 256)
            .map(|i| {
                let a = (i % 97) as f64 / 200.0;
                [a, 0.5 - a / 2.0, 0.5 - a / 2.0]
            })
            .collect();
        let out = stitch(&[(plan.windows[0], probs.clone())], &plan, grid).unwrap();
        for (x, y) in out.data.iter().zip(&probs) {
            for k in 0..3 {
                assert!((x[k] - y[k]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn missing_patch_is_named() {
        let grid = GridSpec::from_origin(0.0, 1.0, 1.0 / 448.0, 256, 448).unwrap();
        let plan = plan_patches((448, 256)).unwrap();
        let only = vec![(plan.windows[0], constant([1.0, 0.0, 0.0]))];
        match stitch(&only, &plan, grid) {
            Err(Error::MissingPatch { row_off, col_off }) => assert_eq!((row_off, col_off), (192, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        let g = GridSpec::from_origin(0.0, 1.0, 0.25, 4, 1).unwrap();
        let third = 1.0 / 3.0;
        let r = Raster::new(
            g,
            vec![[0.1, 0.7, 0.2], [0.4, 0.4, 0.2], [third, third, third], NODATA_TRIPLE],
            None,
        )
        .unwrap();
        assert_eq!(argmax_classify(&r).data, vec![1, 0, 0, CLASS_NODATA]);
    }
}
