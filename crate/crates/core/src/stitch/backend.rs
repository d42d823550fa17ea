use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{PatchProbs, PATCH_CHANNELS, PATCH_SIZE};

/// Maps an 8-channel 256x256 reflectance patch (channel-major, planting
/// B02 B03 B04 B08 then harvest B02 B03 B04 B08) to per-pixel
/// (background, field, boundary) probabilities.
pub trait SegmentationBackend: Send + Sync {
    fn predict(&self, patch: &[f32]) -> Result<PatchProbs>;

    fn name(&self) -> String;
}

/// Rule-based stand-in for a trained network.
///
/// Vegetation is pixels whose two-date mean NDVI reaches `ndvi_threshold`.
/// Vegetated pixels with a non-vegetated 4-neighbour are boundary; other
/// vegetated pixels are field interior with confidence growing with NDVI;
/// everything else is background with probability 1. Neighbours beyond the
/// patch edge are treated as equal to the pixel itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticBackend {
    pub ndvi_threshold: f64,
}

impl Default for SyntheticBackend {
    fn default() -> Self {
        SyntheticBackend { ndvi_threshold: 0.4 }
    }
}

const RIM: [f64; 3] = [0.1, 0.2, 0.7];

fn ndvi(red: f32, nir: f32) -> f64 {
    let (r, n) = (f64::from(red), f64::from(nir));
    if r + n > 0.0 {
        (n - r) / (n + r)
    } else {
        0.0
    }
}

impl SyntheticBackend {
    /// Apply the rule to a square patch of any side length.
    pub fn classify(&self, patch: &[f32], side: usize) -> PatchProbs {
        let plane = side * side;
        let mean_ndvi: Vec<f64> = (0..plane)
            .map(|i| 0.5 * (ndvi(patch[2 * plane + i], patch[3 * plane + i]) + ndvi(patch[6 * plane + i], patch[7 * plane + i])))
            .collect();
        let veg: Vec<bool> = mean_ndvi.iter().map(|&v| v >= self.ndvi_threshold).collect();
        let mut out = Vec::with_capacity(plane);
        for r in 0..side {
            for c in 0..side {
                let i = r * side + c;
                if !veg[i] {
                    out.push([1.0, 0.0, 0.0]);
                    continue;
                }
                let up = r > 0 && !veg[i - side];
                let down = r + 1 < side && !veg[i + side];
                let left = c > 0 && !veg[i - 1];
                let right = c + 1 < side && !veg[i + 1];
                if up || down || left || right {
                    out.push(RIM);
                } else {
                    let conf = ((mean_ndvi[i] - self.ndvi_threshold) / 0.4).clamp(0.0, 1.0);
                    let field = 0.6 + 0.35 * conf;
                    let boundary = 0.6 * (1.0 - field);
                    out.push([1.0 - field - boundary, field, boundary]);
                }
            }
        }
        out
    }
}

impl SegmentationBackend for SyntheticBackend {
    fn predict(&self, patch: &[f32]) -> Result<PatchProbs> {
        check_patch(patch)?;
        Ok(self.classify(patch, PATCH_SIZE))
    }

    fn name(&self) -> String {
        "synthetic".into()
    }
}

fn check_patch(patch: &[f32]) -> Result<()> {
    if patch.len() != PATCH_CHANNELS * PATCH_SIZE * PATCH_SIZE {
        return Err(Error::InvalidInput(format!(
            "patch has {} values, expected {PATCH_CHANNELS}x{PATCH_SIZE}x{PATCH_SIZE}",
            patch.len()
        )));
    }
    Ok(())
}

/// Per-pixel softmax over an affine map of the 8 channel values, loaded from
/// JSON: `{"weights": [[8 numbers] x 3], "bias": [3 numbers]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBackend {
    pub weights: [[f64; PATCH_CHANNELS]; 3],
    pub bias: [f64; 3],
}

impl LinearBackend {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse("backend model", path, e))
    }
}

impl SegmentationBackend for LinearBackend {
    fn predict(&self, patch: &[f32]) -> Result<PatchProbs> {
        check_patch(patch)?;
        let plane = PATCH_SIZE * PATCH_SIZE;
        Ok((0..plane)
            .map(|i| {
                let mut z = self.bias;
                for (k, zk) in z.iter_mut().enumerate() {
                    for ch in 0..PATCH_CHANNELS {
                        *zk += self.weights[k][ch] * f64::from(patch[ch * plane + i]);
                    }
                }
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e = z.map(|v| (v - m).exp());
                let s: f64 = e.iter().sum();
                e.map(|v| v / s)
            })
            .collect())
    }

    fn name(&self) -> String {
        "linear".into()
    }
}

/// Backend selector as written on the command line: `synthetic` or
/// `file:<path>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Backend {
    Synthetic,
    File(std::path::PathBuf),
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "synthetic" {
            Ok(Backend::Synthetic)
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(Backend::File(p.into()))
        } else {
            Err(Error::InvalidInput(format!("unknown backend '{s}'")))
        }
    }
}

impl From<Backend> for String {
    fn from(b: Backend) -> String {
        match b {
            Backend::Synthetic => "synthetic".into(),
            Backend::File(p) => format!("file:{}", p.display()),
        }
    }
}

impl TryFrom<String> for Backend {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl Backend {
    pub fn load(&self) -> Result<Box<dyn SegmentationBackend>> {
        Ok(match self {
            Backend::Synthetic => Box::new(SyntheticBackend::default()),
            Backend::File(p) => Box::new(LinearBackend::load(p)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_patch(side: usize, square: std::ops::Range<usize>) -> Vec<f32> {
        let plane = side * side;
        let mut p = vec![0.05f32; 8 * plane];
        for r in 0..side {
            for c in 0..side {
                let i = r * side + c;
                let inside = square.contains(&r) && square.contains(&c);
                for date in 0..2 {
                    // red, nir
                    p[(date * 4 + 2) * plane + i] = if inside { 0.04 } else { 0.20 };
                    p[(date * 4 + 3) * plane + i] = if inside { 0.40 } else { 0.25 };
                }
            }
        }
        p
    }

    #[test]
    fn all_zero_patch_is_background() {
        let b = SyntheticBackend::default();
        let out = b.predict(&vec![0.0; 8 * PATCH_SIZE * PATCH_SIZE]).unwrap();
        assert!(out.iter().all(|p| *p == [1.0, 0.0, 0.0]));
    }

    #[test]
    fn square_has_interior_and_rim() {
        // 16x16 patch, vegetated square over rows/cols 4..12
        let side = 16;
        let out = SyntheticBackend::default().classify(&toy_patch(side, 4..12), side);
        let argmax = |p: [f64; 3]| (0..3).fold(0, |b, k| if p[k] > p[b] { k } else { b });
        for r in 0..side {
            for c in 0..side {
                let inside = (4..12).contains(&r) && (4..12).contains(&c);
                let rim = inside && (r == 4 || r == 11 || c == 4 || c == 11);
                let expect = if rim {
                    2
                } else if inside {
                    1
                } else {
                    0
                };
                assert_eq!(argmax(out[r * side + c]), expect, "pixel ({r}, {c})");
            }
        }
        for p in out {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let p = toy_patch(PATCH_SIZE, 40..200);
        let b = SyntheticBackend::default();
        assert_eq!(b.predict(&p).unwrap(), b.predict(&p).unwrap());
    }

    #[test]
    fn linear_backend_is_normalized() {
        let b = LinearBackend {
            weights: [[0.0; 8], [1.0, 0.0, -2.0, 3.0, 0.0, 0.0, -2.0, 3.0], [0.5; 8]],
            bias: [0.1, -0.3, 0.0],
        };
        let p = toy_patch(PATCH_SIZE, 10..50);
        for q in b.predict(&p).unwrap() {
            assert!(q.iter().all(|&v| v >= 0.0));
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(LinearBackend::load(&path).unwrap(), b);
        let sel: Backend = format!("file:{}", path.display()).parse().unwrap();
        assert_eq!(sel.load().unwrap().name(), "linear");
        assert!("onnx".parse::<Backend>().is_err());
    }
}
