//! Trained confidence models and their binary artifact.
//!
//! Artifact layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "FMCM"
//! version      u16      1
//! kind         u8       0 = logistic regression, 1 = random forest
//! feature_set  u8 len + ASCII tag (model_only, model_consensus, model_pr, all)
//! crop_filter  u8       0 none, 1 le3, 2 le2, 3 le1
//! seed         u64
//! n_features   u32
//! -- logistic regression --
//! lambda       f64
//! per feature  mean f64, scale f64, weight f64
//! bias         f64
//! -- random forest --
//! n_trees u32, max_depth u32, min_leaf u32
//! per tree     n_nodes u32, then per node:
//!              tag u8 0 = leaf: value f64
//!              tag u8 1 = split: feature u32, threshold f64, left u32, right u32
//! ```
//!
//! The file ends after the last field. Its SHA-256 identifies the model.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::forest::{train_forest, Forest, ForestParams, Node, Tree};
use super::logreg::{train_logreg, LogisticModel, DEFAULT_LAMBDA};
use super::training::CropFilter;
use crate::error::{Error, Result};
use crate::indicators::FeatureSet;

const MAGIC: &[u8; 4] = b"FMCM";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    RandomForest,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic_regression" | "logreg" => Ok(ModelKind::LogisticRegression),
            "random_forest" | "rf" => Ok(ModelKind::RandomForest),
            _ => Err(Error::InvalidInput(format!("unknown model kind '{s}'"))),
        }
    }
}

/// What to train: the kind plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub forest: ForestParams,
    pub lambda: f64,
}

impl ModelSpec {
    pub fn random_forest() -> Self {
        ModelSpec {
            kind: ModelKind::RandomForest,
            forest: ForestParams::default(),
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn logistic() -> Self {
        ModelSpec {
            kind: ModelKind::LogisticRegression,
            ..Self::random_forest()
        }
    }

    pub fn fit(&self, x: &[Vec<f64>], y: &[bool], seed: u64) -> Result<Predictor> {
        Ok(match self.kind {
            ModelKind::LogisticRegression => Predictor::Logistic(train_logreg(x, y, self.lambda)?),
            ModelKind::RandomForest => Predictor::Forest(train_forest(x, y, self.forest, seed)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predictor {
    Logistic(LogisticModel),
    Forest(Forest),
}

impl Predictor {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Predictor::Logistic(m) => m.predict_proba(x),
            Predictor::Forest(f) => f.predict_proba(x),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Predictor::Logistic(_) => ModelKind::LogisticRegression,
            Predictor::Forest(_) => ModelKind::RandomForest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceModel {
    pub feature_set: FeatureSet,
    pub filter: CropFilter,
    pub seed: u64,
    pub n_features: usize,
    pub predictor: Predictor,
}

impl ConfidenceModel {
    pub fn train(spec: &ModelSpec, x: &[Vec<f64>], y: &[bool], set: FeatureSet, filter: CropFilter, seed: u64) -> Result<Self> {
        if let Some(row) = x.iter().find(|r| r.len() != set.len()) {
            return Err(Error::FeatureSetMismatch {
                model: set.to_string(),
                given: format!("{} features", row.len()),
            });
        }
        Ok(ConfidenceModel {
            feature_set: set,
            filter,
            seed,
            n_features: set.len(),
            predictor: spec.fit(x, y, seed)?,
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.predictor.predict_proba(x)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.push(match self.predictor {
            Predictor::Logistic(_) => 0,
            Predictor::Forest(_) => 1,
        });
        let tag = self.feature_set.as_str().as_bytes();
        b.push(tag.len() as u8);
        b.extend_from_slice(tag);
        b.push(self.filter.code());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        let f64s = |b: &mut Vec<u8>, v: f64| b.extend_from_slice(&v.to_le_bytes());
        let u32s = |b: &mut Vec<u8>, v: u32| b.extend_from_slice(&v.to_le_bytes());
        match &self.predictor {
            Predictor::Logistic(m) => {
                f64s(&mut b, m.lambda);
                for j in 0..self.n_features {
                    f64s(&mut b, m.mean[j]);
                    f64s(&mut b, m.scale[j]);
                    f64s(&mut b, m.weights[j]);
                }
                f64s(&mut b, m.bias);
            }
            Predictor::Forest(f) => {
                u32s(&mut b, f.trees.len() as u32);
                u32s(&mut b, f.params.max_depth as u32);
                u32s(&mut b, f.params.min_leaf as u32);
                for t in &f.trees {
                    u32s(&mut b, t.nodes.len() as u32);
                    for n in &t.nodes {
                        match *n {
                            Node::Leaf { value } => {
                                b.push(0);
                                f64s(&mut b, value);
                            }
                            Node::Split { feature, threshold, left, right } => {
                                b.push(1);
                                u32s(&mut b, feature);
                                f64s(&mut b, threshold);
                                u32s(&mut b, left);
                                u32s(&mut b, right);
                            }
                        }
                    }
                }
            }
        }
        b
    }

    pub fn from_bytes(buf: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { buf, pos: 0 };
        if r.bytes(4)? != MAGIC {
            return Err("not a confidence model (bad magic)".into());
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(format!("unsupported model version {version}"));
        }
        let kind = r.u8()?;
        let tag_len = r.u8()? as usize;
        let tag = std::str::from_utf8(r.bytes(tag_len)?).map_err(|e| e.to_string())?;
        let feature_set: FeatureSet = tag.parse().map_err(|e: Error| e.to_string())?;
        let filter = CropFilter::from_code(r.u8()?).ok_or("bad crop filter code")?;
        let seed = r.u64()?;
        let n_features = r.u32()? as usize;
        if n_features != feature_set.len() {
            return Err(format!("{n_features} features recorded for feature set {feature_set}"));
        }
        let predictor = match kind {
            0 => {
                let lambda = r.f64()?;
                let (mut mean, mut scale, mut weights) = (vec![], vec![], vec![]);
                for _ in 0..n_features {
                    mean.push(r.f64()?);
                    scale.push(r.f64()?);
                    weights.push(r.f64()?);
                }
                Predictor::Logistic(LogisticModel {
                    mean,
                    scale,
                    weights,
                    bias: r.f64()?,
                    lambda,
                })
            }
            1 => {
                let n_trees = r.u32()? as usize;
                let params = ForestParams {
                    n_trees,
                    max_depth: r.u32()? as usize,
                    min_leaf: r.u32()? as usize,
                };
                let mut trees = Vec::with_capacity(n_trees.min(4096));
                for t in 0..n_trees {
                    let n = r.u32()? as usize;
                    let mut nodes = Vec::with_capacity(n.min(1 << 16));
                    for _ in 0..n {
                        nodes.push(match r.u8()? {
                            0 => Node::Leaf { value: r.f64()? },
                            1 => {
                                let (feature, threshold, left, right) = (r.u32()?, r.f64()?, r.u32()?, r.u32()?);
                                if feature as usize >= n_features || left as usize >= n || right as usize >= n {
                                    return Err(format!("tree {t}: split references out of range"));
                                }
                                Node::Split { feature, threshold, left, right }
                            }
                            other => return Err(format!("tree {t}: bad node tag {other}")),
                        });
                    }
                    if nodes.is_empty() {
                        return Err(format!("tree {t} is empty"));
                    }
                    trees.push(Tree { nodes });
                }
                Predictor::Forest(Forest {
                    n_features,
                    params,
                    trees,
                })
            }
            k => return Err(format!("unknown model kind {k}")),
        };
        if r.pos != buf.len() {
            return Err(format!("{} trailing bytes", buf.len() - r.pos));
        }
        Ok(ConfidenceModel {
            feature_set,
            filter,
            seed,
            n_features,
            predictor,
        })
    }

    /// Hex SHA-256 of the artifact bytes.
    pub fn hash(&self) -> String {
        artifact_hash(&self.to_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let path = path.as_ref();
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(artifact_hash(&bytes))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::parse("confidence model", path, m))
    }
}

pub fn artifact_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<bool>) {
        let x: Vec<Vec<f64>> = (0..200)
            .map(|i| (0..7).map(|j| f64::from((i * (j + 3)) % 17)).collect())
            .collect();
        let y = x.iter().map(|r| r[0] + r[3] > 16.0).collect();
        (x, y)
    }

    #[test]
    fn artifact_round_trip_both_kinds() {
        let (x, y) = data();
        for spec in [ModelSpec::logistic(), ModelSpec { forest: ForestParams { n_trees: 5, ..Default::default() }, ..ModelSpec::random_forest() }] {
            let m = ConfidenceModel::train(&spec, &x, &y, FeatureSet::ModelOnly, CropFilter::Le2, 11).unwrap();
            let back = ConfidenceModel::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.hash(), m.hash());
            assert_eq!(m.hash().len(), 64);
        }
    }

    #[test]
    fn corrupt_artifacts_rejected() {
        let (x, y) = data();
        let spec = ModelSpec { forest: ForestParams { n_trees: 2, ..Default::default() }, ..ModelSpec::random_forest() };
        let m = ConfidenceModel::train(&spec, &x, &y, FeatureSet::ModelOnly, CropFilter::None, 1).unwrap();
        let b = m.to_bytes();
        assert!(ConfidenceModel::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(ConfidenceModel::from_bytes(b"NOPE").is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(ConfidenceModel::from_bytes(&extra).is_err());
    }

    #[test]
    fn wrong_width_rejected() {
        let (x, y) = data();
        let err = ConfidenceModel::train(&ModelSpec::logistic(), &x, &y, FeatureSet::All, CropFilter::None, 0);
        assert!(matches!(err, Err(Error::FeatureSetMismatch { .. })));
    }
}
