//! Non-learned forecasters.
//!
//! * [`last_seen_forecast`] repeats the last observed frame for every horizon.
//! * [`const_velocity_forecast`] translates each thing instance seen in the
//!   last two frames by its centroid velocity times the horizon. Depth moves
//!   with the instance unchanged; depth change over time is not modeled.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{ClassKind, ClassTable, DepthMap, PanopticLabel, PanopticMap};

/// Frames `t-k ..= t`, oldest first.
#[derive(Clone, Debug)]
pub struct ObservedWindow {
    frames: Vec<(PanopticMap, DepthMap)>,
}

impl ObservedWindow {
    pub fn new(frames: Vec<(PanopticMap, DepthMap)>) -> Result<Self> {
        let Some((first, _)) = frames.first() else {
            return Err(Error::WindowTooShort { needed: 1, found: 0 });
        };
        let dims = first.dims();
        for (pan, depth) in &frames {
            for found in [pan.dims(), depth.dims()] {
                if found != dims {
                    return Err(Error::DimensionMismatch { expected: dims, found });
                }
            }
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[(PanopticMap, DepthMap)] {
        &self.frames
    }

    pub fn current(&self) -> &(PanopticMap, DepthMap) {
        self.frames.last().expect("window is never empty")
    }
}

pub fn last_seen_forecast(window: &ObservedWindow, _delta: u32) -> (PanopticMap, DepthMap) {
    window.current().clone()
}

/// Half-up rounding, matching the renderer.
fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

fn thing_centroids(pan: &PanopticMap, classes: &ClassTable) -> BTreeMap<PanopticLabel, (f64, f64, u64)> {
    let mut sums: BTreeMap<PanopticLabel, (f64, f64, u64)> = BTreeMap::new();
    for y in 0..pan.height() {
        for x in 0..pan.width() {
            let label = pan.get(x, y);
            if classes.kind(label.class_id) == ClassKind::Thing && label.instance_id != 0 {
                let s = sums.entry(label).or_default();
                s.0 += x as f64;
                s.1 += y as f64;
                s.2 += 1;
            }
        }
    }
    sums.into_iter()
        .map(|(label, (sx, sy, n))| (label, (sx / n as f64, sy / n as f64, n)))
        .collect()
}

/// Integer pixel shift applied to each instance for horizon `delta`.
pub fn instance_shifts(window: &ObservedWindow, delta: u32, classes: &ClassTable) -> Result<BTreeMap<PanopticLabel, (i64, i64)>> {
    if window.len() < 2 {
        return Err(Error::WindowTooShort {
            needed: 2,
            found: window.len(),
        });
    }
    let prev = thing_centroids(&window.frames[window.len() - 2].0, classes);
    let cur = thing_centroids(&window.current().0, classes);
    let d = f64::from(delta);
    Ok(cur
        .iter()
        .filter_map(|(label, &(cx, cy, _))| {
            let &(px, py, _) = prev.get(label)?;
            Some((*label, (round_half_up(d * (cx - px)), round_half_up(d * (cy - py)))))
        })
        .collect())
}

/// Needs at least two frames; see [`instance_shifts`].
pub fn const_velocity_forecast(
    window: &ObservedWindow,
    delta: u32,
    classes: &ClassTable,
) -> Result<(PanopticMap, DepthMap)> {
    let shifts = instance_shifts(window, delta, classes)?;
    let (pan, depth) = window.current();
    let (w, h) = pan.dims();
    let moving: BTreeMap<PanopticLabel, (i64, i64)> =
        shifts.into_iter().filter(|(_, s)| *s != (0, 0)).collect();
    if moving.is_empty() {
        return Ok((pan.clone(), depth.clone()));
    }

    let void = classes.void_label();
    let mut out_pan = pan.clone();
    let mut out_depth = depth.clone();
    let mut vacated = vec![false; w * h];
    // Thing pixels written by a translated instance, so collisions between
    // movers also compare depth.
    let mut painted = vec![false; w * h];

    for (i, label) in pan.labels().iter().enumerate() {
        if moving.contains_key(label) {
            out_pan.labels_mut()[i] = void;
            out_depth.values_mut()[i] = DepthMap::INVALID;
            vacated[i] = true;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let label = pan.get(x, y);
            let Some(&(dx, dy)) = moving.get(&label) else {
                continue;
            };
            let (tx, ty) = (x as i64 + dx, y as i64 + dy);
            if tx < 0 || ty < 0 || tx >= w as i64 || ty >= h as i64 {
                continue;
            }
            let (tx, ty) = (tx as usize, ty as usize);
            let j = ty * w + tx;
            let d = depth.get(x, y);
            let existing = out_pan.labels()[j];
            let occupied_by_thing = classes.kind(existing.class_id) == ClassKind::Thing;
            if occupied_by_thing && !vacated[j] || painted[j] {
                let current = out_depth.values()[j];
                if d.partial_cmp(&current) != Some(std::cmp::Ordering::Less) {
                    continue;
                }
            }
            out_pan.labels_mut()[j] = label;
            out_depth.values_mut()[j] = d;
            vacated[j] = false;
            painted[j] = true;
        }
    }

    for y in 0..h {
        for x in 0..w {
            if !vacated[y * w + x] {
                continue;
            }
            if let Some((label, d)) = stuff_majority(pan, depth, classes, x, y) {
                out_pan.set(x, y, label);
                out_depth.set(x, y, d);
            }
        }
    }
    Ok((out_pan, out_depth))
}

/// Most frequent frame-`t` stuff class in the 5x5 neighborhood (ties go to
/// the smaller class id) and the mean depth of its pixels there.
fn stuff_majority(pan: &PanopticMap, depth: &DepthMap, classes: &ClassTable, x: usize, y: usize) -> Option<(PanopticLabel, f64)> {
    let mut votes: BTreeMap<u16, (u32, f64)> = BTreeMap::new();
    let (w, h) = pan.dims();
    for ny in y.saturating_sub(2)..(y + 3).min(h) {
        for nx in x.saturating_sub(2)..(x + 3).min(w) {
            let label = pan.get(nx, ny);
            if classes.kind(label.class_id) == ClassKind::Stuff {
                let v = votes.entry(label.class_id).or_default();
                v.0 += 1;
                v.1 += depth.get(nx, ny);
            }
        }
    }
    let (class_id, (count, sum)) = votes
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.cmp(&a.0)))?;
    Some((PanopticLabel::new(class_id, 0), sum / f64::from(count)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_class_table, render_sequence, SceneSpec, Shape, StuffLayer, ThingSpec};
    use crate::types::validate;

    fn scene(velocity: (f64, f64)) -> SceneSpec {
        SceneSpec {
            width: 48,
            height: 24,
            class_table: default_class_table(),
            stuff: vec![StuffLayer {
                class_id: 7,
                depth: 30.0,
                rows: None,
            }],
            things: vec![ThingSpec {
                class_id: 26,
                shape: Shape::Rect,
                size: (6, 5),
                position: (4.0, 8.0),
                velocity,
                depth: 10.0,
                depth_rate: 0.0,
                instance_id: Some(3),
            }],
            frame_count: 12,
            seed: 0,
        }
    }

    fn window(frames: &[(PanopticMap, DepthMap)], t: usize, k: usize) -> ObservedWindow {
        ObservedWindow::new(frames[t - k..=t].to_vec()).unwrap()
    }

    #[test]
    fn empty_window_rejected() {
        assert!(matches!(
            ObservedWindow::new(vec![]),
            Err(Error::WindowTooShort { needed: 1, found: 0 })
        ));
    }

    #[test]
    fn last_seen_repeats_current() {
        let frames = render_sequence(&scene((2.0, 0.0))).unwrap();
        let w = window(&frames, 3, 3);
        assert_eq!(last_seen_forecast(&w, 5), frames[3]);
    }

    #[test]
    fn zero_velocity_equals_last_seen() {
        let classes = default_class_table();
        let frames = render_sequence(&scene((0.0, 0.0))).unwrap();
        let w = window(&frames, 3, 3);
        assert_eq!(const_velocity_forecast(&w, 3, &classes).unwrap(), last_seen_forecast(&w, 3));
    }

    #[test]
    fn rigid_motion_predicts_exact_mask() {
        let classes = default_class_table();
        let frames = render_sequence(&scene((2.0, 0.0))).unwrap();
        let w = window(&frames, 3, 3);
        let (pred, _) = const_velocity_forecast(&w, 3, &classes).unwrap();
        let car = PanopticLabel::new(26, 3);
        let mask = |m: &PanopticMap| m.labels().iter().map(|&l| l == car).collect::<Vec<_>>();
        assert_eq!(mask(&pred), mask(&frames[6].0));
    }

    #[test]
    fn new_instance_is_copied() {
        let classes = default_class_table();
        let frames = render_sequence(&scene((2.0, 0.0))).unwrap();
        // Relabel the car at t only, so it has no history.
        let mut current = frames[3].clone();
        for l in current.0.labels_mut() {
            if l.class_id == 26 {
                l.instance_id = 9;
            }
        }
        let w = ObservedWindow::new(vec![frames[2].clone(), current.clone()]).unwrap();
        assert_eq!(const_velocity_forecast(&w, 2, &classes).unwrap(), current);
    }

    #[test]
    fn single_frame_window_needs_fallback() {
        let classes = default_class_table();
        let frames = render_sequence(&scene((2.0, 0.0))).unwrap();
        let w = window(&frames, 3, 0);
        assert!(matches!(
            const_velocity_forecast(&w, 1, &classes),
            Err(Error::WindowTooShort { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn forecasts_are_valid_and_vacated_pixels_filled() {
        let classes = default_class_table();
        let frames = render_sequence(&scene((2.0, 1.0))).unwrap();
        let w = window(&frames, 4, 3);
        let (pan, depth) = const_velocity_forecast(&w, 5, &classes).unwrap();
        assert!(validate(&pan, &depth, &classes).is_empty());
        // At t the car covers x 12..=17, y 12..=16. Its rim takes the road
        // label back; the deep interior has no stuff within two pixels.
        let car = PanopticLabel::new(26, 3);
        assert!(pan.labels().contains(&car));
        assert_eq!(pan.get(12, 12), PanopticLabel::new(7, 0));
        assert_eq!(depth.get(12, 12), 30.0);
        assert_eq!(pan.get(14, 14), classes.void_label());
    }
}
