mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdcq::ingest::load_manifest;

fn pdcq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdcq"))
        .args(args)
        .env_remove(pdcq::cli::THREADS_ENV)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_default(root: &Path) -> PathBuf {
    let out = pdcq(&["synth", "--output", s(root)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    root.join("manifest.json")
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn stderr_error(out: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn synth_output_loads_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_default(dir.path());
    let loaded = load_manifest(&manifest).unwrap();
    assert_eq!(loaded.sequences.len(), 1);
    let out = pdcq(&["validate", "--manifest", s(&manifest)]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["invalid"], 0);
    assert_eq!(summary["checked"], 12);
}

#[test]
fn synth_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth_default(a.path());
    synth_default(b.path());
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn single_frame_spec_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = pdcq::synth::default_scene();
    spec.frame_count = 1;
    let path = dir.path().join("one.json");
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = pdcq(&["synth", "--spec", s(&path), "--output", s(&dir.path().join("out"))]);
    assert_eq!(code(&out), 2);
    assert_eq!(stderr_error(&out)["error"], "config");
}

#[test]
fn perfect_fixture_scores_100() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = synth_default(dir.path());
    let manifest = load_manifest(&manifest_path).unwrap();
    let preds = common::perfect_predictions(&manifest, &dir.path().join("perfect"));
    let report = dir.path().join("report.md");
    let out = pdcq(&[
        "evaluate", "--manifest", s(&manifest_path), "--predictions", s(&preds),
        "--format", "markdown", "--method", "perfect", "--output", s(&report),
    ]);
    assert_eq!(code(&out), 0);
    let md = std::fs::read_to_string(report).unwrap();
    assert!(md.contains("| perfect | 100.00 | 100.00 | 0.000 | 100.00 | 100.00 | 0.000 | 100.00 | 100.00 | 0.000 |"), "{md}");
    assert!(md.contains("| perfect | 100.00 | 100.00 | 100.00 | 100.00 |"), "{md}");
}

#[test]
fn empty_predictions_report_every_missing_pair() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_default(dir.path());
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = pdcq(&["evaluate", "--manifest", s(&manifest), "--predictions", s(&empty)]);
    assert_eq!(code(&out), 1);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // 12 frames, window 2: t = 2..=10 for Δ=1, 2..=8 for Δ=3, 2..=6 for Δ=5.
    assert_eq!(doc["coverage"]["expected"], 9 + 7 + 5);
    assert_eq!(doc["coverage"]["missing"].as_array().unwrap().len(), 21);
    assert!(doc["report"].is_null());
    assert_eq!(stderr_error(&out)["error"], "missing_predictions");
}

#[test]
fn partial_coverage_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_default(dir.path());
    let preds = dir.path().join("last");
    assert_eq!(code(&pdcq(&["baseline", "last-seen", "--manifest", s(&manifest), "--output", s(&preds)])), 0);
    std::fs::remove_file(preds.join("scene/4/3_depth.png")).unwrap();
    let out = pdcq(&["evaluate", "--manifest", s(&manifest), "--predictions", s(&preds)]);
    assert_eq!(code(&out), 1);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["coverage"]["evaluated"], 20);
    assert_eq!(doc["coverage"]["missing"][0]["t"], 4);
    assert!(doc["report"].is_object());
}

#[test]
fn baseline_predictions_have_full_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_default(dir.path());
    for name in ["last-seen", "const-velocity"] {
        let preds = dir.path().join(name);
        let out = pdcq(&["baseline", name, "--manifest", s(&manifest), "--output", s(&preds)]);
        assert_eq!(code(&out), 0);
        let out = pdcq(&["validate", "--manifest", s(&manifest), "--predictions", s(&preds)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
        let out = pdcq(&["evaluate", "--manifest", s(&manifest), "--predictions", s(&preds), "--format", "csv"]);
        assert_eq!(code(&out), 0);
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("delta,lambda,scope,metric,value\n"));
    }
}

#[test]
fn const_velocity_falls_back_on_single_frame_windows() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    let out = pdcq(&["synth", "--output", s(&root), "--observed-window", "0"]);
    assert_eq!(code(&out), 0);
    let manifest = root.join("manifest.json");
    let (cv, last) = (dir.path().join("cv"), dir.path().join("last"));
    let out = pdcq(&["baseline", "const-velocity", "--manifest", s(&manifest), "--output", s(&cv)]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("used last-seen"));
    pdcq(&["baseline", "last-seen", "--manifest", s(&manifest), "--output", s(&last)]);
    assert_eq!(tree(&cv), tree(&last));
}

#[test]
fn unknown_baseline_is_usage_error() {
    let out = pdcq(&["baseline", "optical-flow", "--manifest", "m.json", "--output", "o"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn thread_count_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_pdcq"))
        .args(["evaluate", "--manifest", "m.json", "--predictions", "p"])
        .env(pdcq::cli::THREADS_ENV, "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn reports_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_default(dir.path());
    let preds = dir.path().join("cv");
    pdcq(&["baseline", "const-velocity", "--manifest", s(&manifest), "--output", s(&preds)]);
    for format in ["json", "csv", "markdown"] {
        let outputs: Vec<Vec<u8>> = ["1", "2", "8"]
            .iter()
            .map(|threads| {
                let out = pdcq(&[
                    "evaluate", "--manifest", s(&manifest), "--predictions", s(&preds),
                    "--format", format, "--threads", threads,
                ]);
                assert_eq!(code(&out), 0);
                out.stdout
            })
            .collect();
        assert!(outputs.windows(2).all(|w| w[0] == w[1]), "{format}");
    }
}

#[test]
fn malformed_prediction_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_default(dir.path());
    let preds = dir.path().join("last");
    pdcq(&["baseline", "last-seen", "--manifest", s(&manifest), "--output", s(&preds)]);
    std::fs::write(preds.join("scene/2/1_pan.png"), b"not a png").unwrap();
    let out = pdcq(&["evaluate", "--manifest", s(&manifest), "--predictions", s(&preds)]);
    assert_eq!(code(&out), 3);
    assert_eq!(stderr_error(&out)["exit_code"], 3);
}

#[test]
fn missing_manifest_is_io_error() {
    let out = pdcq(&["validate", "--manifest", "/nonexistent/manifest.json"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn invalid_lambda_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_default(dir.path());
    let out = pdcq(&["evaluate", "--manifest", s(&manifest), "--predictions", "p", "--lambdas", "0.5,0.1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn oracle_check_outcomes() {
    let out = pdcq(&["oracle-check", "--size", "16", "--trials", "100", "--seed", "42"]);
    assert_eq!(code(&out), 0);

    let out = pdcq(&["oracle-check", "--trials", "0"]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["checks"], 0);

    let out = pdcq(&["oracle-check", "--trials", "5", "--inject-fault", "1e-9"]);
    assert_eq!(code(&out), 1);
    let message = stderr_error(&out)["message"].as_str().unwrap().to_string();
    assert!(message.contains("lambda 0.1") && message.contains("class "), "{message}");

    assert_eq!(code(&pdcq(&["oracle-check", "--size", "65"])), 2);
}
