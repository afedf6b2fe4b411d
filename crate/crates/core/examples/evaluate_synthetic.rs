//! End to end without a trained model: render a synthetic scene, forecast it
//! with both baselines, score the forecasts, and print the benchmark tables.
//!
//!     cargo run --example evaluate_synthetic

use pdcq::cli::{evaluate, synthesize, write_baseline, BaselineName};
use pdcq::ingest::{load_manifest, EvalSpec};
use pdcq::report::to_markdown;
use pdcq::synth::default_scene;
use pdcq::PdcqConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let eval = EvalSpec {
        observed_window: 2,
        deltas: vec![1, 3, 5],
    };
    let manifest_path = synthesize(&[("scene".into(), default_scene())], dir.path(), eval, "demo")?;
    let manifest = load_manifest(&manifest_path)?;
    let config = PdcqConfig {
        deltas: manifest.eval.deltas.clone(),
        ..PdcqConfig::default()
    };

    let mut reports = Vec::new();
    for (label, name) in [("Last seen", BaselineName::LastSeen), ("Const. velocity", BaselineName::ConstVelocity)] {
        let preds = dir.path().join(label.replace(' ', "_"));
        let (written, _) = write_baseline(name, &manifest, &preds, &config.deltas)?;
        let output = evaluate(&manifest, &preds, &config, label, None).map_err(|e| e.message)?;
        println!("{label}: scored {written} forecasts");
        reports.push((label, output.report.expect("full coverage")));
    }

    let rows: Vec<(&str, &pdcq::PdcqReport)> = reports.iter().map(|(l, r)| (*l, r)).collect();
    println!("\n{}", to_markdown(&rows));
    Ok(())
}
