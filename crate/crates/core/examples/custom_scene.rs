//! Describe a scene in code, save it as JSON for `pdcq synth --spec`, and
//! check every rendered frame against the label and depth invariants.
//!
//!     cargo run --example custom_scene -- scene.json

use pdcq::synth::{default_class_table, render_sequence, SceneSpec, Shape, StuffLayer, ThingSpec};
use pdcq::validate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SceneSpec {
        width: 80,
        height: 48,
        class_table: default_class_table(),
        stuff: vec![
            StuffLayer { class_id: 23, depth: 200.0, rows: Some((0, 16)) },
            StuffLayer { class_id: 11, depth: 60.0, rows: Some((16, 28)) },
            StuffLayer { class_id: 7, depth: 25.0, rows: Some((28, 48)) },
        ],
        things: vec![
            ThingSpec {
                class_id: 26,
                shape: Shape::Rect,
                size: (14, 8),
                position: (2.0, 30.0),
                velocity: (3.0, 0.0),
                depth: 12.0,
                depth_rate: -0.2,
                instance_id: Some(1),
            },
            ThingSpec {
                class_id: 24,
                shape: Shape::Ellipse,
                size: (4, 10),
                position: (60.0, 24.0),
                velocity: (-1.0, 0.5),
                depth: 9.0,
                depth_rate: 0.0,
                instance_id: None,
            },
        ],
        frame_count: 10,
        seed: 1,
    };

    for (i, (pan, depth)) in render_sequence(&spec)?.iter().enumerate() {
        let report = validate(pan, depth, &spec.class_table);
        println!("frame {i}: {} violations", report.len());
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, serde_json::to_string_pretty(&spec)?)?;
        println!("wrote {path}; render it with `pdcq synth --spec {path} --output out/`");
    }
    Ok(())
}
