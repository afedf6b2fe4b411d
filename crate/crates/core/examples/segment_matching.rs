//! Segment extraction and the IoU > 0.5 matching behind PQ, on maps small
//! enough to check by eye.
//!
//!     cargo run --example segment_matching

use pdcq::synth::default_class_table;
use pdcq::{extract_segments, match_segments, PanopticLabel, PanopticMap, SegmentRole};

fn map(rows: &[&str]) -> PanopticMap {
    // r = road, c/d = two cars, . = void
    let labels = rows
        .iter()
        .flat_map(|r| r.chars())
        .map(|ch| match ch {
            'r' => PanopticLabel::new(7, 0),
            'c' => PanopticLabel::new(26, 1),
            'd' => PanopticLabel::new(26, 2),
            _ => PanopticLabel::new(255, 0),
        })
        .collect();
    PanopticMap::new(rows[0].len(), rows.len(), labels).expect("rectangular")
}

fn main() -> pdcq::Result<()> {
    let classes = default_class_table();
    let gt = map(&["rrrrrrrr", "rcccrrdd", "rcccrrdd", "rrrrrr.."]);
    // Car 1 is shifted one column: 4 shared pixels over a union of 8 gives
    // IoU exactly 0.5, which does not count as a match.
    let pred = map(&["rrrrrrrr", "rrcccrrr", "rrcccrdr", "rrrrrrrr"]);

    let pred_set = extract_segments(&pred, &classes, SegmentRole::Prediction);
    let gt_set = extract_segments(&gt, &classes, SegmentRole::GroundTruth);
    let result = match_segments(&pred_set, &gt_set, &classes)?;

    for (class_id, m) in &result.classes {
        let name = &classes.get(*class_id).expect("known class").name;
        for tp in &m.tp {
            println!("{name}: TP {} ↔ {} IoU {:.3}", tp.pred.label(), tp.gt.label(), tp.iou);
        }
        for fp in &m.fp {
            println!("{name}: FP {} ({} px)", fp.label(), fp.pixel_count);
        }
        for f in &m.fn_ {
            println!("{name}: FN {} ({} px)", f.label(), f.pixel_count);
        }
        for d in &m.dropped {
            println!("{name}: ignored {} (mostly on void)", d.label());
        }
    }
    Ok(())
}
