use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{default_class_table, SceneSpec, Shape, StuffLayer, ThingSpec};
use crate::types::{ClassTable, DepthMap, PanopticLabel, PanopticMap};

const STUFF: [u16; 5] = [7, 8, 11, 21, 23];
const THINGS: [u16; 3] = [24, 26, 33];

#[derive(Clone, Debug)]
pub struct RandomSceneOptions {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub min_things: usize,
    pub max_things: usize,
    /// Largest horizontal speed in whole pixels per frame.
    pub max_speed: i64,
    /// Give every thing its own band of rows and horizontal motion only, so
    /// things never occlude each other.
    pub lanes: bool,
    /// Keep every thing fully inside the frame for the whole sequence.
    pub keep_in_frame: bool,
}

impl Default for RandomSceneOptions {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            frame_count: 10,
            min_things: 2,
            max_things: 5,
            max_speed: 3,
            lanes: false,
            keep_in_frame: false,
        }
    }
}

fn random_stuff(rng: &mut ChaCha8Rng, height: usize) -> Vec<StuffLayer> {
    let mut classes = STUFF.to_vec();
    classes.shuffle(rng);
    let bands = rng.gen_range(2..=3).min(height);
    let mut cuts: Vec<usize> = (0..bands - 1).map(|_| rng.gen_range(1..height.max(2))).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(height);
    let mut depth = 120.0;
    bounds
        .windows(2)
        .zip(classes)
        .filter(|(w, _)| w[0] < w[1])
        .map(|(w, class_id)| {
            depth = (depth * rng.gen_range(0.3..0.8f64)).max(1.0);
            StuffLayer {
                class_id,
                depth,
                rows: Some((w[0], w[1])),
            }
        })
        .collect()
}

/// Random scene with constant integer velocities. Deterministic in `seed`.
pub fn random_moving_scene(options: &RandomSceneOptions, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (options.width, options.height);
    let n = rng.gen_range(options.min_things..=options.max_things.max(options.min_things));
    let mut depths: Vec<f64> = (0..n).map(|i| 4.0 + 2.5 * i as f64).collect();
    depths.shuffle(&mut rng);
    let span = options.frame_count.saturating_sub(1) as i64;
    let lane_height = if options.lanes { (h / n.max(1)).max(1) } else { h };

    let things = (0..n)
        .map(|i| {
            let max_w = (w / 4).max(2);
            let max_h = if options.lanes { lane_height } else { (h / 3).max(2) };
            let size = (rng.gen_range(2..=max_w.max(2)), rng.gen_range(2.min(max_h)..=max_h.max(1)));
            let mut vx = rng.gen_range(-options.max_speed..=options.max_speed);
            let vy = if options.lanes {
                0
            } else {
                rng.gen_range(-1..=1)
            };
            let range = |extent: usize, s: usize, v: i64| -> Option<(i64, i64)> {
                let lo = (-span * v).max(0);
                let hi = extent as i64 - s as i64 - (span * v).max(0);
                (lo <= hi).then_some((lo, hi))
            };
            let x = if options.keep_in_frame {
                let (lo, hi) = range(w, size.0, vx).unwrap_or_else(|| {
                    vx = 0;
                    (0, (w as i64 - size.0 as i64).max(0))
                });
                rng.gen_range(lo..=hi)
            } else {
                rng.gen_range(-(size.0 as i64) / 2..w as i64)
            };
            let y = if options.lanes {
                let top = (i * lane_height) as i64;
                top + rng.gen_range(0..=(lane_height - size.1) as i64)
            } else if options.keep_in_frame {
                let vy_ok = range(h, size.1, vy);
                let (lo, hi) = vy_ok.unwrap_or((0, (h as i64 - size.1 as i64).max(0)));
                rng.gen_range(lo..=hi)
            } else {
                rng.gen_range(-(size.1 as i64) / 2..h as i64)
            };
            let vy = if options.keep_in_frame && range(h, size.1, vy).is_none() { 0 } else { vy };
            ThingSpec {
                class_id: *THINGS.choose(&mut rng).expect("nonempty"),
                shape: if rng.gen_bool(0.5) { Shape::Rect } else { Shape::Ellipse },
                size,
                position: (x as f64, y as f64),
                velocity: (vx as f64, vy as f64),
                depth: depths[i],
                depth_rate: 0.0,
                instance_id: None,
            }
        })
        .collect();

    SceneSpec {
        width: w,
        height: h,
        class_table: default_class_table(),
        stuff: random_stuff(&mut rng, h),
        things,
        frame_count: options.frame_count,
        seed,
    }
}

/// One random prediction/ground-truth pair for differential testing.
#[derive(Clone, Debug)]
pub struct OracleCase {
    pub classes: ClassTable,
    pub pred_pan: PanopticMap,
    pub pred_depth: DepthMap,
    pub gt_pan: PanopticMap,
    pub gt_depth: DepthMap,
}

fn fill_rect(rng: &mut ChaCha8Rng, pan: &mut PanopticMap, label: PanopticLabel) {
    let (w, h) = pan.dims();
    let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
    let (x1, y1) = (rng.gen_range(x0..w) + 1, rng.gen_range(y0..h) + 1);
    for y in y0..y1 {
        for x in x0..x1 {
            pan.set(x, y, label);
        }
    }
}

/// A frame pair of at most `size`×`size` pixels: the prediction is a
/// perturbed copy of the ground-truth scene (shifted, resized, relabeled,
/// dropped and extra things), the ground truth carries void and crowd
/// patches, and predicted depth is scaled and noised.
pub fn random_case(size: usize, seed: u64) -> OracleCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let size = size.max(4);
    let options = RandomSceneOptions {
        width: rng.gen_range(size / 2..=size).max(4),
        height: rng.gen_range(size / 2..=size).max(4),
        frame_count: 2,
        min_things: 2,
        max_things: 6,
        ..RandomSceneOptions::default()
    };
    let gt_scene = random_moving_scene(&options, rng.gen());
    let classes = gt_scene.class_table.clone();

    let mut pred_scene = gt_scene.clone();
    pred_scene.seed = rng.gen();
    for layer in &mut pred_scene.stuff {
        if let Some((y0, y1)) = layer.rows.as_mut() {
            if *y0 > 0 {
                *y0 = (*y0 as i64 + rng.gen_range(-2..=2)).clamp(0, options.height as i64 - 1) as usize;
            }
            *y1 = (*y1).max(*y0 + 1);
        }
    }
    // Keep coverage after jittering band edges.
    if let Some(first) = pred_scene.stuff.first_mut() {
        first.rows = None;
    }
    pred_scene.things.retain(|_| rng.gen_bool(0.85));
    for thing in &mut pred_scene.things {
        thing.position.0 += f64::from(rng.gen_range(-2i32..=2));
        thing.position.1 += f64::from(rng.gen_range(-2i32..=2));
        thing.size.0 = (thing.size.0 as i64 + rng.gen_range(-1..=1)).max(1) as usize;
        thing.size.1 = (thing.size.1 as i64 + rng.gen_range(-1..=1)).max(1) as usize;
        if rng.gen_bool(0.15) {
            thing.class_id = *THINGS.choose(&mut rng).expect("nonempty");
        }
    }
    if rng.gen_bool(0.3) {
        let mut extra = random_moving_scene(&options, rng.gen()).things;
        extra.truncate(1);
        for mut thing in extra {
            thing.depth = 100.5;
            pred_scene.things.push(thing);
        }
    }

    let (mut gt_pan, mut gt_depth) = gt_scene.render_frame(0);
    let (pred_pan, pred_geometry) = pred_scene.render_frame(0);

    if rng.gen_bool(0.5) {
        fill_rect(&mut rng, &mut gt_pan, classes.void_label());
    }
    if rng.gen_bool(0.3) {
        let crowd = PanopticLabel::new(*THINGS.choose(&mut rng).expect("nonempty"), 0);
        fill_rect(&mut rng, &mut gt_pan, crowd);
    }
    for d in gt_depth.values_mut() {
        if rng.gen_bool(0.1) {
            *d = DepthMap::INVALID;
        }
    }

    let global = rng.gen_range(0.8..1.3);
    let mut pred_depth = pred_geometry;
    for d in pred_depth.values_mut() {
        *d = if rng.gen_bool(0.05) {
            DepthMap::INVALID
        } else {
            *d * global * rng.gen_range(0.8..1.2)
        };
    }

    OracleCase {
        classes,
        pred_pan,
        pred_depth,
        gt_pan,
        gt_depth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::render_sequence;
    use crate::types::validate;

    #[test]
    fn random_scenes_are_valid() {
        for seed in 0..50 {
            let options = RandomSceneOptions {
                lanes: seed % 2 == 0,
                keep_in_frame: seed % 3 == 0,
                ..RandomSceneOptions::default()
            };
            let spec = random_moving_scene(&options, seed);
            spec.validate().unwrap();
            for (pan, depth) in render_sequence(&spec).unwrap() {
                assert!(validate(&pan, &depth, &spec.class_table).is_empty());
            }
        }
    }

    #[test]
    fn random_case_is_deterministic() {
        let a = random_case(32, 5);
        let b = random_case(32, 5);
        assert_eq!(a.gt_pan, b.gt_pan);
        assert_eq!(a.pred_depth, b.pred_depth);
        assert!(a.gt_pan.width() <= 32 && a.gt_pan.height() <= 32);
    }
}
