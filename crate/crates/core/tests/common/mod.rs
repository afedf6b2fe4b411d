#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};

use pdcq::ingest::{forecast_targets, load_manifest, read_depth, read_panoptic, EvalSpec, Manifest, PredictionLayout};
use pdcq::synth::SceneSpec;

pub fn eval_spec() -> EvalSpec {
    EvalSpec {
        observed_window: 2,
        deltas: vec![1, 3, 5],
    }
}

/// Renders `specs` as a dataset under `dir` and loads its manifest back.
pub fn dataset(dir: &Path, specs: &[(String, SceneSpec)]) -> Manifest {
    let path = pdcq::cli::synthesize(specs, dir, eval_spec(), "fixture").unwrap();
    load_manifest(path).unwrap()
}

/// Copies the ground truth at `t + delta` into the prediction layout.
pub fn perfect_predictions(manifest: &Manifest, out: &Path) -> PathBuf {
    let layout = PredictionLayout::new(out);
    let classes = &manifest.class_table;
    for (seq, pos, delta, target) in forecast_targets(manifest, &manifest.eval.deltas) {
        let pan = read_panoptic(manifest.resolve(&target.panoptic), classes).unwrap();
        let depth = read_depth(manifest.resolve(&target.depth)).unwrap();
        layout
            .write(&seq.id, seq.frames[pos].index, delta, &pan, &depth, classes)
            .unwrap();
    }
    out.to_path_buf()
}

/// Writes straight to the process stdout so the line shows up even when the
/// test harness captures `println!`.
pub fn report_line(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[acceptance] criterion {criterion:>2}: {status} - {detail}");
}
