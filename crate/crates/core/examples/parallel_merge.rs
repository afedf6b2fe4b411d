//! Statistics are mergeable: score shards independently, merge in any order,
//! and the report is bit-identical to a single pass.
//!
//!     cargo run --example parallel_merge

use pdcq::synth::{random_moving_scene, render_sequence, RandomSceneOptions};
use pdcq::{evaluate_frames, finalize, merge, EvalFrame, PdcqConfig};

fn main() -> pdcq::Result<()> {
    let spec = random_moving_scene(&RandomSceneOptions::default(), 11);
    let classes = &spec.class_table;
    let frames = render_sequence(&spec)?;
    let config = PdcqConfig::default();

    // Forecast each frame with its predecessor.
    let pairs: Vec<EvalFrame> = frames
        .windows(2)
        .enumerate()
        .map(|(t, w)| EvalFrame {
            sequence_id: "s".into(),
            t: t as i64,
            delta: 1,
            pred_pan: w[0].0.clone(),
            pred_depth: w[0].1.clone(),
            gt_pan: w[1].0.clone(),
            gt_depth: w[1].1.clone(),
        })
        .collect();

    let whole = finalize(&evaluate_frames(&pairs, classes, &config)?, classes, &config)?;
    let (a, b) = pairs.split_at(pairs.len() / 3);
    let merged = merge(&evaluate_frames(b, classes, &config)?, &evaluate_frames(a, classes, &config)?)?;
    let sharded = finalize(&merged, classes, &config)?;

    println!("single pass PDC-Q avg {:.6}", whole.overall_avg);
    println!("merged      PDC-Q avg {:.6}", sharded.overall_avg);
    assert_eq!(whole, sharded);
    Ok(())
}
