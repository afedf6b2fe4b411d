//! The two reference forecasters scored in memory against the rendered
//! future, one horizon at a time.
//!
//!     cargo run --example forecast_baselines

use pdcq::baselines::{const_velocity_forecast, last_seen_forecast, ObservedWindow};
use pdcq::synth::{default_scene, render_sequence};
use pdcq::{finalize, frame_stats_all, EvalFrame, PdcqConfig};

fn main() -> pdcq::Result<()> {
    let spec = default_scene();
    let classes = &spec.class_table;
    let frames = render_sequence(&spec)?;
    let t = 3;
    let window = ObservedWindow::new(frames[t - 2..=t].to_vec())?;
    let config = PdcqConfig::default();

    println!("{:>3} {:>12} {:>16}", "Δ", "last seen", "const velocity");
    for delta in [1u32, 3, 5] {
        let (gt_pan, gt_depth) = frames[t + delta as usize].clone();
        let mut row = Vec::new();
        for (pred_pan, pred_depth) in [last_seen_forecast(&window, delta), const_velocity_forecast(&window, delta, classes)?] {
            let frame = EvalFrame {
                sequence_id: "scene".into(),
                t: t as i64,
                delta,
                pred_pan,
                pred_depth,
                gt_pan: gt_pan.clone(),
                gt_depth: gt_depth.clone(),
            };
            let report = finalize(&frame_stats_all(&frame, classes, &config)?, classes, &config)?;
            row.push(report.horizons[0].pdcq_avg);
        }
        println!("{delta:>3} {:>12.2} {:>16.2}", row[0], row[1]);
    }
    Ok(())
}
