//! Atomic artifact writes, provenance sidecars and the resumable run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::failure::Failure;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn partial_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.partial"))
}

/// Run `write` against a temporary sibling of `path`, then rename it into place.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<(), Failure>
where
    F: FnOnce(&Path) -> Result<(), Failure>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    let tmp = partial_path(path);
    match write(&tmp) {
        Ok(()) => fs::rename(&tmp, path).map_err(|e| io_failure(path, e)),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn atomic_write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    atomic_write(path, |tmp| fs::write(tmp, bytes).map_err(|e| io_failure(tmp, e)))
}

pub fn file_sha256(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| io_failure(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let name = artifact.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    artifact.with_file_name(format!("{name}.prov.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub sha256: String,
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tile: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
}

/// Writes artifacts on behalf of one run, attaching a sidecar to each.
#[derive(Debug, Clone)]
pub struct Recorder {
    pub config_hash: String,
    pub seed: u64,
}

impl Recorder {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Recorder {
            config_hash: config_hash.into(),
            seed,
        }
    }

    /// Recorder for commands run from flags alone: the hash covers the arguments.
    pub fn for_args(args: &[String], seed: u64) -> Self {
        let json = serde_json::to_vec(args).expect("strings serialize");
        Recorder::new(hex(&Sha256::digest(&json)), seed)
    }

    /// Write `path` atomically through `write`, then its provenance sidecar.
    pub fn write<F>(&self, path: &Path, stage: &str, tile: Option<&str>, write: F) -> Result<(), Failure>
    where
        F: FnOnce(&Path) -> Result<(), Failure>,
    {
        atomic_write(path, write)?;
        self.sidecar(path, stage, tile)
    }

    /// Provenance sidecar for an artifact already in place.
    pub fn sidecar(&self, path: &Path, stage: &str, tile: Option<&str>) -> Result<(), Failure> {
        let versions = BTreeMap::from([
            ("fieldmap".to_string(), TOOL_VERSION.to_string()),
            ("geoparquet".to_string(), fieldmap_core::vectorize::GEOPARQUET_VERSION.to_string()),
            ("fiboa".to_string(), fieldmap_core::vectorize::FIBOA_VERSION.to_string()),
        ]);
        let prov = Provenance {
            artifact: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256: file_sha256(path)?,
            stage: stage.to_string(),
            tile: tile.map(str::to_string),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            versions,
        };
        let text = serde_json::to_string_pretty(&prov).expect("provenance serializes");
        atomic_write_bytes(&sidecar_path(path), text.as_bytes())
    }

    /// Shorthand for artifacts produced by a core writer.
    pub fn write_core<F>(&self, path: &Path, stage: &str, tile: Option<&str>, write: F) -> Result<(), Failure>
    where
        F: FnOnce(&Path) -> fieldmap_core::Result<()>,
    {
        self.write(path, stage, tile, |p| write(p).map_err(Failure::from))
    }

    pub fn write_text(&self, path: &Path, stage: &str, text: &str) -> Result<(), Failure> {
        self.write(path, stage, None, |p| fs::write(p, text).map_err(|e| io_failure(p, e)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    /// Outputs relative to the run's output directory.
    Done { outputs: Vec<PathBuf> },
    Failed { message: String },
}

/// Per-tile and global stage status, keyed so a rerun can skip finished work.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tiles: BTreeMap<String, BTreeMap<String, StageStatus>>,
    pub global: BTreeMap<String, StageStatus>,
}

impl RunManifest {
    /// The manifest at `path` if it was written under the same configuration;
    /// otherwise an empty one.
    pub fn load_or_new(path: &Path, config_hash: &str) -> Self {
        let fresh = RunManifest {
            config_hash: config_hash.to_string(),
            ..Default::default()
        };
        let Ok(text) = fs::read_to_string(path) else {
            return fresh;
        };
        match serde_json::from_str::<RunManifest>(&text) {
            Ok(m) if m.config_hash == config_hash => m,
            Ok(_) => {
                tracing::info!(manifest = %path.display(), "configuration changed; starting from scratch");
                fresh
            }
            Err(e) => {
                tracing::warn!(manifest = %path.display(), error = %e, "unreadable manifest ignored");
                fresh
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        atomic_write_bytes(path, text.as_bytes())
    }

    fn is_done(root: &Path, status: Option<&StageStatus>) -> bool {
        match status {
            Some(StageStatus::Done { outputs }) => outputs.iter().all(|p| root.join(p).exists()),
            _ => false,
        }
    }

    pub fn tile_done(&self, root: &Path, tile: &str, stage: &str) -> bool {
        Self::is_done(root, self.tiles.get(tile).and_then(|s| s.get(stage)))
    }

    pub fn global_done(&self, root: &Path, stage: &str) -> bool {
        Self::is_done(root, self.global.get(stage))
    }

    pub fn set_tile(&mut self, tile: &str, stage: &str, status: StageStatus) {
        self.tiles.entry(tile.to_string()).or_default().insert(stage.to_string(), status);
    }

    /// Drop a tile's record from `stage` onwards, so later stages rerun.
    pub fn invalidate_tile_from(&mut self, tile: &str, stages: &[&str], stage: &str) {
        if let (Some(m), Some(i)) = (self.tiles.get_mut(tile), stages.iter().position(|s| *s == stage)) {
            for s in &stages[i..] {
                m.remove(*s);
            }
        }
    }

    pub fn failed_tiles(&self) -> Vec<String> {
        self.tiles
            .iter()
            .filter(|(_, s)| s.values().any(|v| matches!(v, StageStatus::Failed { .. })))
            .map(|(t, _)| t.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_writer_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        let r = atomic_write(&p, |tmp| {
            fs::write(tmp, "half").unwrap();
            Err(Failure::Input("boom".into()))
        });
        assert!(r.is_err());
        assert!(!p.exists());
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 0);
    }

    #[test]
    fn sidecar_records_hash_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        let rec = Recorder::new("cfg", 7);
        rec.write_text(&p, "test", "hello").unwrap();
        let prov: Provenance = serde_json::from_str(&fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        assert_eq!(prov.artifact, "x.txt");
        assert_eq!(prov.sha256, "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
        assert_eq!(prov.config_hash, "cfg");
        assert_eq!(prov.seed, 7);
        assert_eq!(prov.versions["fieldmap"], TOOL_VERSION);
    }

    #[test]
    fn manifest_resume_rules() {
        let dir = tempfile::tempdir().unwrap();
        let mp = dir.path().join("manifest.json");
        let out = dir.path().join("o.tif");
        fs::write(&out, "x").unwrap();
        let mut m = RunManifest::load_or_new(&mp, "h1");
        m.set_tile("t0", "stitch", StageStatus::Done { outputs: vec!["o.tif".into()] });
        m.set_tile("t1", "stitch", StageStatus::Failed { message: "bad".into() });
        m.save(&mp).unwrap();

        let back = RunManifest::load_or_new(&mp, "h1");
        assert!(back.tile_done(dir.path(), "t0", "stitch"));
        assert!(!back.tile_done(dir.path(), "t1", "stitch"));
        assert_eq!(back.failed_tiles(), vec!["t1".to_string()]);

        fs::remove_file(&out).unwrap();
        assert!(!back.tile_done(dir.path(), "t0", "stitch"));
        assert!(RunManifest::load_or_new(&mp, "h2").tiles.is_empty());
    }
}
