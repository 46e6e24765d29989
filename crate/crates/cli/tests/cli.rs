use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn asp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asp")).args(args).env_remove("ASP_BACKEND_URL").output().unwrap()
}

#[test]
fn run_prints_a_scored_log() {
    let out = asp(&["run", "--scene", "tabletop-pick", "--query", "pick-place", "--seed", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(lines.len() >= 4);
    assert_eq!(lines[0]["tool"], "object_retrieval");
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("score 1"));
}

#[test]
fn run_accepts_the_query_text_and_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    let out = asp(&[
        "run",
        "--scene",
        "keyboard",
        "--query",
        "press the space bar on the keyboard",
        "--no-aff",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    assert!(!fs::read_to_string(&path).unwrap().is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("score 0"));
}

#[test]
fn mode_mismatch_and_missing_endpoint_fail() {
    let out = asp(&["run", "--scene", "drawer", "--query", "open-drawer", "--mode", "mobile"]);
    assert!(!out.status.success());
    let out = asp(&["run", "--scene", "drawer", "--query", "open-drawer", "--backend", "external"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ASP_BACKEND_URL"));
}

#[test]
fn batch_reports_a_row_per_entry() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.json");
    fs::write(
        &suite,
        r#"{"seeds": 3, "entries": [
            {"template": "desk-bell", "task": "ring-bell"},
            {"template": "desk-bell", "task": "ring-bell", "no_aff": true}
        ]}"#,
    )
    .unwrap();
    let logs = dir.path().join("logs");
    let out = asp(&["batch", "--suite", suite.to_str().unwrap(), "--json", "--logs", logs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["episodes"], 3);
    assert_eq!(rows[0]["mean"], 1.0);
    assert_eq!(rows[1]["variant"], "no-aff");
    assert_eq!(fs::read_dir(&logs).unwrap().count(), 6);
}

#[test]
fn render_writes_images_and_map() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.pgm");
    let map = dir.path().join("map.json");
    let out = asp(&["render", "--scene", "drawer", "--out", scene.to_str().unwrap(), "--map", map.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let img = image::open(&scene).unwrap().into_luma8();
    assert_eq!(img.dimensions(), (640, 480));
    assert!(img.pixels().any(|p| p.0[0] > 0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&map).unwrap()).unwrap();
    assert!(doc["objects"].as_array().is_some_and(|o| !o.is_empty()));

    let nav = dir.path().join("nav.pgm");
    let out = asp(&["render", "--scene", "mobile-room", "--seed", "1", "--nav", "--out", nav.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let img = image::open(&nav).unwrap().into_luma8();
    assert!(img.pixels().any(|p| p.0[0] == 128));

    let out = asp(&["render", "--scene", "drawer", "--nav", "--out", nav.to_str().unwrap()]);
    assert!(!out.status.success());
}
