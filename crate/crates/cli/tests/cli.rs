use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fieldmap::fixture::write_fixture;
use fieldmap_core::vectorize::read_fields;

fn fieldmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fieldmap"))
        .args(args)
        .env_remove("FIELDMAP_THREADS")
        .output()
        .expect("binary runs")
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), 42).unwrap();
    (dir, cfg)
}

fn run_ok(args: &[&str]) {
    let out = fieldmap(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn ids(path: &Path) -> Vec<String> {
    read_fields(path).unwrap().into_iter().map(|p| p.id).collect()
}

fn last_stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has a line");
    serde_json::from_str(line).expect("structured error line")
}

#[test]
fn stitch_reruns_are_byte_identical() {
    let (_d, cfg) = setup();
    let cfg = cfg.to_str().unwrap();
    run_ok(&["-c", cfg, "run", "composite"]);
    run_ok(&["-c", cfg, "run", "stitch"]);
    let out = cfg.replace("pipeline.toml", "out/tiles");
    let first: Vec<Vec<u8>> = ["t0", "t1"]
        .iter()
        .map(|t| fs::read(format!("{out}/{t}/classes.tif")).unwrap())
        .collect();
    run_ok(&["-c", cfg, "stitch"]);
    for (t, bytes) in ["t0", "t1"].iter().zip(first) {
        assert_eq!(fs::read(format!("{out}/{t}/classes.tif")).unwrap(), bytes, "tile {t}");
        assert!(Path::new(&format!("{out}/{t}/classes.tif.prov.json")).exists());
    }
}

#[test]
fn stepwise_commands_and_nested_filters() {
    let (d, cfg) = setup();
    let cfg = cfg.to_str().unwrap();
    for stage in ["composite", "stitch", "vectorize", "indicators"] {
        run_ok(&["-c", cfg, "run", stage]);
    }
    run_ok(&["-c", cfg, "run", "confidence", "train", "--filter", "le2", "--feature-set", "model_only"]);
    let model = d.path().join("out/model");
    assert!(model.join("model.fmcm").exists());
    let cv: serde_json::Value = serde_json::from_str(&fs::read_to_string(model.join("cv.json")).unwrap()).unwrap();
    assert_eq!(cv["folds"].as_array().unwrap().len(), 5);
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(model.join("model.fmcm.prov.json")).unwrap()).unwrap();
    assert_eq!(prov["seed"], 42);
    assert_eq!(prov["config_hash"].as_str().unwrap().len(), 64);

    run_ok(&["-c", cfg, "run", "confidence", "apply"]);
    run_ok(&["-c", cfg, "run", "filter", "--threshold", "0.4"]);
    run_ok(&["-c", cfg, "run", "filter", "--threshold", "0.5"]);
    let lo: BTreeSet<String> = ids(&d.path().join("out/filtered/fields_t0.40.parquet")).into_iter().collect();
    let hi: BTreeSet<String> = ids(&d.path().join("out/filtered/fields_t0.50.parquet")).into_iter().collect();
    assert!(!hi.is_empty() && hi.len() < lo.len());
    assert!(hi.is_subset(&lo));
}

#[test]
fn partial_failure_then_resume_without_duplicates() {
    let (d, cfg) = setup();
    let cfg_s = cfg.to_str().unwrap();
    let manifest = d.path().join("scenes/t1/manifest.csv");
    let good = fs::read_to_string(&manifest).unwrap();
    fs::write(&manifest, good.replace("scene_2.tif", "missing.tif")).unwrap();

    let out = fieldmap(&["-c", cfg_s, "pipeline"]);
    assert_eq!(out.status.code(), Some(3));
    let err = last_stderr_json(&out);
    assert_eq!(err["error"], "partial");
    assert_eq!(err["failed_tiles"], serde_json::json!(["t1"]));
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(run["tiles"]["t1"]["composite"]["status"], "failed");
    assert_eq!(run["tiles"]["t0"]["indicators"]["status"], "done");
    assert!(!d.path().join("out/fields.parquet").exists());
    let t0_classes = fs::read(d.path().join("out/tiles/t0/classes.tif")).unwrap();

    fs::write(&manifest, good).unwrap();
    let out = fieldmap(&["-c", cfg_s, "pipeline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("already done"));
    assert_eq!(fs::read(d.path().join("out/tiles/t0/classes.tif")).unwrap(), t0_classes);

    let merged = ids(&d.path().join("out/fields.parquet"));
    let unique: BTreeSet<&String> = merged.iter().collect();
    assert_eq!(unique.len(), merged.len(), "duplicate polygons after resume");
    let per_tile: usize = ["t0", "t1"]
        .iter()
        .map(|t| ids(&d.path().join(format!("out/tiles/{t}/fields.parquet"))).len())
        .sum();
    assert_eq!(merged.len(), per_tile);

    // A second resume after losing the merged product rebuilds the same set.
    fs::remove_file(d.path().join("out/fields.parquet")).unwrap();
    run_ok(&["-c", cfg_s, "pipeline"]);
    assert_eq!(ids(&d.path().join("out/fields.parquet")), merged);
}

#[test]
fn missing_input_is_a_structured_input_error() {
    let (d, cfg) = setup();
    fs::remove_file(d.path().join("scenes/t0/manifest.csv")).unwrap();
    fs::remove_file(d.path().join("scenes/t1/manifest.csv")).unwrap();
    let out = fieldmap(&["-c", cfg.to_str().unwrap(), "run", "composite"]);
    assert_eq!(out.status.code(), Some(3));

    let out = fieldmap(&["-c", "/nonexistent/pipeline.toml", "pipeline"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(last_stderr_json(&out)["error"], "input");

    let out = fieldmap(&["-c", cfg.to_str().unwrap(), "run", "filter", "--threshold", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(last_stderr_json(&out)["error"], "usage");

    assert_eq!(fieldmap(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(fieldmap(&["--version"]).status.code(), Some(0));
}

#[test]
fn logs_are_structured_with_stage_timing() {
    let (_d, cfg) = setup();
    let out = fieldmap(&["-c", cfg.to_str().unwrap(), "composite", "--tile", "t0"]);
    assert!(out.status.success());
    let done: Vec<serde_json::Value> = String::from_utf8_lossy(&out.stderr)
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| v["fields"]["message"] == "stage finished")
        .collect();
    assert_eq!(done.len(), 1);
    let f = &done[0]["fields"];
    assert_eq!(f["tile"], "t0");
    assert_eq!(f["stage"], "composite");
    assert!(f["wall_ms"].is_u64() && f["pixels"].as_u64().unwrap() > 0);
}
