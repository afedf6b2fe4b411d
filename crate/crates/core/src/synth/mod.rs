//! Deterministic synthetic panoptic-depth sequences and brute-force metric
//! oracles.
//!
//! A scene is a stack of constant-depth stuff bands with rectangles and
//! ellipses (things) moving at constant velocity in front. Positions are
//! rounded half-up to whole pixels, so a thing's mask is translated exactly
//! and its pixel centroid moves by the velocity while it stays in frame. The
//! nearest surface wins each pixel. No noise is added.

pub mod oracle;
mod random;

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassInfo, ClassTable, DepthMap, PanopticLabel, PanopticMap, MAX_INSTANCE_ID};

pub use random::{random_case, random_moving_scene, OracleCase, RandomSceneOptions};

/// Exclusive bound on rendered depths, set by the depth PNG encoding.
pub const MAX_SCENE_DEPTH: f64 = 256.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rect,
    Ellipse,
}

/// A constant-depth stuff plane covering rows `[rows.0, rows.1)`, or the whole
/// frame when `rows` is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StuffLayer {
    pub class_id: u16,
    pub depth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThingSpec {
    pub class_id: u16,
    pub shape: Shape,
    /// Width and height in pixels.
    pub size: (usize, usize),
    /// Top-left corner at frame 0.
    pub position: (f64, f64),
    /// Pixels per frame.
    #[serde(default)]
    pub velocity: (f64, f64),
    pub depth: f64,
    /// Meters per frame.
    #[serde(default)]
    pub depth_rate: f64,
    /// Drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u16>,
}

impl ThingSpec {
    pub fn depth_at(&self, frame: usize) -> f64 {
        self.depth + frame as f64 * self.depth_rate
    }

    /// Top-left pixel at `frame`, rounded half-up.
    pub fn origin_at(&self, frame: usize) -> (i64, i64) {
        let t = frame as f64;
        (
            (self.position.0 + t * self.velocity.0 + 0.5).floor() as i64,
            (self.position.1 + t * self.velocity.1 + 0.5).floor() as i64,
        )
    }

    /// Whether local pixel `(i, j)` of the bounding box is covered.
    pub fn covers(&self, i: usize, j: usize) -> bool {
        match self.shape {
            Shape::Rect => true,
            Shape::Ellipse => {
                let (rx, ry) = (self.size.0 as f64 / 2.0, self.size.1 as f64 / 2.0);
                let dx = (i as f64 + 0.5 - rx) / rx;
                let dy = (j as f64 + 0.5 - ry) / ry;
                dx * dx + dy * dy <= 1.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_class_table")]
    pub class_table: ClassTable,
    /// Back to front.
    pub stuff: Vec<StuffLayer>,
    pub things: Vec<ThingSpec>,
    pub frame_count: usize,
    pub seed: u64,
}

/// Cityscapes-style ids: road 7, sidewalk 8, building 11, vegetation 21,
/// sky 23 (stuff); person 24, car 26, bicycle 33 (things); void 255.
pub fn default_class_table() -> ClassTable {
    let class = |id, name: &str, is_thing| ClassInfo {
        id,
        name: name.into(),
        is_thing,
    };
    ClassTable::new(
        vec![
            class(7, "road", false),
            class(8, "sidewalk", false),
            class(11, "building", false),
            class(21, "vegetation", false),
            class(23, "sky", false),
            class(24, "person", true),
            class(26, "car", true),
            class(33, "bicycle", true),
        ],
        255,
    )
    .expect("static class table is valid")
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if self.width == 0 || self.height == 0 {
            return fail("frame must have at least one pixel".into());
        }
        if self.frame_count < 2 {
            return fail(format!("frame_count must be at least 2, got {}", self.frame_count));
        }
        let mut covered = vec![false; self.height];
        for layer in &self.stuff {
            if !self.class_table.is_stuff(layer.class_id) {
                return fail(format!("stuff layer uses non-stuff class {}", layer.class_id));
            }
            if !(layer.depth > 0.0 && layer.depth < MAX_SCENE_DEPTH) {
                return fail(format!("stuff depth {} outside (0, 256)", layer.depth));
            }
            let (y0, y1) = layer.rows.unwrap_or((0, self.height));
            if y0 >= y1 || y1 > self.height {
                return fail(format!("stuff rows [{y0}, {y1}) outside the frame"));
            }
            covered[y0..y1].iter_mut().for_each(|c| *c = true);
        }
        if let Some(row) = covered.iter().position(|c| !c) {
            return fail(format!("row {row} is not covered by any stuff layer"));
        }
        let mut depths = Vec::new();
        let mut explicit = HashSet::new();
        for thing in &self.things {
            if !self.class_table.is_thing(thing.class_id) {
                return fail(format!("thing uses non-thing class {}", thing.class_id));
            }
            if thing.size.0 == 0 || thing.size.1 == 0 {
                return fail("thing with empty size".into());
            }
            for f in [0, self.frame_count - 1] {
                let d = thing.depth_at(f);
                if !(d > 0.0 && d < MAX_SCENE_DEPTH) {
                    return fail(format!("thing depth {d} at frame {f} outside (0, 256)"));
                }
            }
            if depths.contains(&thing.depth.to_bits()) {
                return fail(format!("two things share depth {}", thing.depth));
            }
            depths.push(thing.depth.to_bits());
            if let Some(id) = thing.instance_id {
                if id == 0 || id >= MAX_INSTANCE_ID {
                    return fail(format!("instance id {id} outside [1, 999]"));
                }
                if !explicit.insert((thing.class_id, id)) {
                    return fail(format!("instance ({}, {id}) listed twice", thing.class_id));
                }
            }
        }
        Ok(())
    }

    /// Final `(class, instance)` label of every thing, in spec order.
    /// Missing instance ids are drawn without replacement from `1..=999`
    /// using the seed.
    pub fn instance_labels(&self) -> Vec<PanopticLabel> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut pools: BTreeMap<u16, Vec<u16>> = BTreeMap::new();
        for thing in &self.things {
            pools.entry(thing.class_id).or_insert_with(|| {
                let taken: HashSet<u16> = self
                    .things
                    .iter()
                    .filter(|t| t.class_id == thing.class_id)
                    .filter_map(|t| t.instance_id)
                    .collect();
                (1..MAX_INSTANCE_ID).filter(|i| !taken.contains(i)).collect()
            });
        }
        for pool in pools.values_mut() {
            pool.shuffle(&mut rng);
        }
        self.things
            .iter()
            .map(|thing| {
                let id = thing.instance_id.unwrap_or_else(|| {
                    pools
                        .get_mut(&thing.class_id)
                        .and_then(Vec::pop)
                        .expect("fewer than 1000 instances per class")
                });
                PanopticLabel::new(thing.class_id, id)
            })
            .collect()
    }

    pub fn render_frame(&self, frame: usize) -> (PanopticMap, DepthMap) {
        self.render_with_labels(frame, &self.instance_labels())
    }

    fn render_with_labels(&self, frame: usize, labels: &[PanopticLabel]) -> (PanopticMap, DepthMap) {
        let (w, h) = (self.width, self.height);
        let mut pan = PanopticMap::filled(w, h, self.class_table.void_label());
        let mut depth = DepthMap::filled(w, h, DepthMap::INVALID);
        for layer in &self.stuff {
            let (y0, y1) = layer.rows.unwrap_or((0, h));
            for y in y0..y1 {
                for x in 0..w {
                    pan.set(x, y, PanopticLabel::new(layer.class_id, 0));
                    depth.set(x, y, layer.depth);
                }
            }
        }
        // Far to near; equal depths keep spec order.
        let mut order: Vec<usize> = (0..self.things.len()).collect();
        order.sort_by(|&a, &b| {
            self.things[b]
                .depth_at(frame)
                .total_cmp(&self.things[a].depth_at(frame))
        });
        for i in order {
            let thing = &self.things[i];
            let d = thing.depth_at(frame);
            let (ox, oy) = thing.origin_at(frame);
            for j in 0..thing.size.1 {
                let y = oy + j as i64;
                if y < 0 || y >= h as i64 {
                    continue;
                }
                for ii in 0..thing.size.0 {
                    let x = ox + ii as i64;
                    if x < 0 || x >= w as i64 || !thing.covers(ii, j) {
                        continue;
                    }
                    pan.set(x as usize, y as usize, labels[i]);
                    depth.set(x as usize, y as usize, d);
                }
            }
        }
        (pan, depth)
    }
}

/// Renders every frame of a validated spec.
pub fn render_sequence(spec: &SceneSpec) -> Result<Vec<(PanopticMap, DepthMap)>> {
    spec.validate()?;
    let labels = spec.instance_labels();
    Ok((0..spec.frame_count)
        .map(|f| spec.render_with_labels(f, &labels))
        .collect())
}

/// A small moving-scene spec used by the examples and the CLI default.
pub fn default_scene() -> SceneSpec {
    SceneSpec {
        width: 96,
        height: 64,
        class_table: default_class_table(),
        stuff: vec![
            StuffLayer {
                class_id: 23,
                depth: 200.0,
                rows: Some((0, 20)),
            },
            StuffLayer {
                class_id: 11,
                depth: 60.0,
                rows: Some((10, 36)),
            },
            StuffLayer {
                class_id: 7,
                depth: 15.0,
                rows: Some((36, 64)),
            },
        ],
        things: vec![
            ThingSpec {
                class_id: 26,
                shape: Shape::Rect,
                size: (18, 10),
                position: (4.0, 40.0),
                velocity: (3.0, 0.0),
                depth: 12.0,
                depth_rate: 0.0,
                instance_id: None,
            },
            ThingSpec {
                class_id: 24,
                shape: Shape::Ellipse,
                size: (6, 14),
                position: (70.0, 30.0),
                velocity: (-2.0, 0.5),
                depth: 9.0,
                depth_rate: 0.0,
                instance_id: None,
            },
            ThingSpec {
                class_id: 26,
                shape: Shape::Rect,
                size: (14, 8),
                position: (60.0, 50.0),
                velocity: (-1.5, 0.0),
                depth: 8.0,
                depth_rate: 0.0,
                instance_id: None,
            },
        ],
        frame_count: 12,
        seed: 7,
    }
}
