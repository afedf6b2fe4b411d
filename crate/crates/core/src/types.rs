//! Domain types shared by every stage of the evaluator, plus structural
//! validation of a (panoptic, depth) pair.
//!
//! Void is a reserved class id carried by the [`ClassTable`]. Ground truth
//! marks unlabeled pixels with it; the depth filter in [`crate::pdcq`] uses the
//! same label for predicted pixels it discards.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exclusive upper bound on instance ids imposed by the `class*1000+instance`
/// file encoding.
pub const MAX_INSTANCE_ID: u16 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PanopticLabel {
    pub class_id: u16,
    pub instance_id: u16,
}

impl PanopticLabel {
    pub const fn new(class_id: u16, instance_id: u16) -> Self {
        Self {
            class_id,
            instance_id,
        }
    }

    /// Packed key, unique per label.
    #[inline]
    pub(crate) fn key(self) -> u32 {
        (u32::from(self.class_id) << 16) | u32::from(self.instance_id)
    }
}

impl fmt::Display for PanopticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.class_id, self.instance_id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: u16,
    pub name: String,
    pub is_thing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ClassKind {
    Unknown,
    Void,
    Thing,
    Stuff,
}

/// The evaluated classes and the reserved void id.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ClassTableRepr", into = "ClassTableRepr")]
pub struct ClassTable {
    classes: Vec<ClassInfo>,
    void_class_id: u16,
    kinds: Vec<ClassKind>,
}

#[derive(Serialize, Deserialize)]
struct ClassTableRepr {
    void_class_id: u16,
    classes: Vec<ClassInfo>,
}

impl TryFrom<ClassTableRepr> for ClassTable {
    type Error = Error;

    fn try_from(repr: ClassTableRepr) -> Result<Self> {
        ClassTable::new(repr.classes, repr.void_class_id)
    }
}

impl From<ClassTable> for ClassTableRepr {
    fn from(table: ClassTable) -> Self {
        ClassTableRepr {
            void_class_id: table.void_class_id,
            classes: table.classes,
        }
    }
}

impl PartialEq for ClassTable {
    fn eq(&self, other: &Self) -> bool {
        self.void_class_id == other.void_class_id && self.classes == other.classes
    }
}

impl Eq for ClassTable {}

impl ClassTable {
    pub fn new(mut classes: Vec<ClassInfo>, void_class_id: u16) -> Result<Self> {
        classes.sort_by_key(|c| c.id);
        let mut seen = HashSet::new();
        for class in &classes {
            if !seen.insert(class.id) {
                return Err(Error::InvalidClassTable(format!(
                    "class id {} listed twice",
                    class.id
                )));
            }
            if class.id == void_class_id {
                return Err(Error::InvalidClassTable(format!(
                    "void class id {void_class_id} is listed as an evaluated class"
                )));
            }
        }
        let len = classes
            .iter()
            .map(|c| c.id)
            .chain([void_class_id])
            .max()
            .map_or(0, |m| usize::from(m) + 1);
        let mut kinds = vec![ClassKind::Unknown; len];
        kinds[usize::from(void_class_id)] = ClassKind::Void;
        for class in &classes {
            kinds[usize::from(class.id)] = if class.is_thing {
                ClassKind::Thing
            } else {
                ClassKind::Stuff
            };
        }
        Ok(Self {
            classes,
            void_class_id,
            kinds,
        })
    }

    /// Evaluated classes, sorted by id.
    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn void_class_id(&self) -> u16 {
        self.void_class_id
    }

    pub fn void_label(&self) -> PanopticLabel {
        PanopticLabel::new(self.void_class_id, 0)
    }

    pub fn get(&self, class_id: u16) -> Option<&ClassInfo> {
        self.classes
            .binary_search_by_key(&class_id, |c| c.id)
            .ok()
            .map(|i| &self.classes[i])
    }

    pub fn contains(&self, class_id: u16) -> bool {
        matches!(self.kind(class_id), ClassKind::Thing | ClassKind::Stuff)
    }

    pub fn is_thing(&self, class_id: u16) -> bool {
        self.kind(class_id) == ClassKind::Thing
    }

    pub fn is_stuff(&self, class_id: u16) -> bool {
        self.kind(class_id) == ClassKind::Stuff
    }

    #[inline]
    pub(crate) fn kind(&self, class_id: u16) -> ClassKind {
        self.kinds
            .get(usize::from(class_id))
            .copied()
            .unwrap_or(ClassKind::Unknown)
    }

    /// Stable digest used to refuse merging statistics from different tables.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        self.void_class_id.hash(&mut hasher);
        self.classes.hash(&mut hasher);
        hasher.finish()
    }
}

/// Per-pixel `(class, instance)` label image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanopticMap {
    width: usize,
    height: usize,
    labels: Vec<PanopticLabel>,
}

impl PanopticMap {
    pub fn new(width: usize, height: usize, labels: Vec<PanopticLabel>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (labels.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: PanopticLabel) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[PanopticLabel] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [PanopticLabel] {
        &mut self.labels
    }

    pub fn into_labels(self) -> Vec<PanopticLabel> {
        self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> PanopticLabel {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: PanopticLabel) {
        self.labels[y * self.width + x] = label;
    }
}

/// Per-pixel metric depth in meters, row-major. `0.0` marks an invalid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

impl DepthMap {
    pub const INVALID: f64 = 0.0;

    pub fn new(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (depth.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            depth,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            depth: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.depth
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.depth
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.depth[y * self.width + x] = value;
    }

    #[inline]
    pub fn is_valid(value: f64) -> bool {
        value > 0.0
    }
}

/// One forecast to score: the prediction for frame `t + delta` made after
/// observing frames up to `t`, and the ground truth at `t + delta`.
#[derive(Clone, Debug)]
pub struct EvalFrame {
    pub sequence_id: String,
    pub t: i64,
    pub delta: u32,
    pub pred_pan: PanopticMap,
    pub pred_depth: DepthMap,
    pub gt_pan: PanopticMap,
    pub gt_depth: DepthMap,
}

impl EvalFrame {
    pub fn dims(&self) -> (usize, usize) {
        self.gt_pan.dims()
    }

    pub fn check_dims(&self) -> Result<()> {
        let expected = self.gt_pan.dims();
        for found in [
            self.gt_depth.dims(),
            self.pred_pan.dims(),
            self.pred_depth.dims(),
        ] {
            if found != expected {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        Ok(())
    }
}

/// How per-horizon scores combine into the overall score for one threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
}

/// Where the depth check enters matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Predicted pixels failing the inlier test become void before matching.
    #[default]
    PerPixel,
    /// Matching is depth-blind; a matched pair counts as TP only if the
    /// predicted segment's mean abs-rel error passes the threshold, otherwise
    /// it is demoted to one FP plus one FN.
    SegmentMean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InlierBoundary {
    /// `error <= lambda` passes.
    #[default]
    Inclusive,
    /// `error < lambda` passes.
    Exclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdcqConfig {
    pub lambdas: Vec<f64>,
    pub deltas: Vec<u32>,
    pub min_depth: f64,
    pub max_depth: f64,
    pub iou_threshold: f64,
    pub overall_aggregation: Aggregation,
    pub filter_mode: FilterMode,
    pub inlier_boundary: InlierBoundary,
}

impl Default for PdcqConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.1, 0.25, 0.5],
            deltas: vec![1, 3, 5],
            min_depth: 0.5,
            max_depth: 80.0,
            iou_threshold: 0.5,
            overall_aggregation: Aggregation::Mean,
            filter_mode: FilterMode::PerPixel,
            inlier_boundary: InlierBoundary::Inclusive,
        }
    }
}

impl PdcqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::InvalidConfig("no depth thresholds".into()));
        }
        for &lambda in &self.lambdas {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidLambda(lambda));
            }
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "depth thresholds must be strictly increasing".into(),
            ));
        }
        if self.deltas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "horizons must be strictly increasing".into(),
            ));
        }
        if !(self.min_depth >= 0.0 && self.min_depth < self.max_depth) {
            return Err(Error::InvalidConfig(format!(
                "depth range [{}, {}] is empty",
                self.min_depth, self.max_depth
            )));
        }
        if self.iou_threshold != 0.5 {
            return Err(Error::InvalidConfig(
                "the matching IoU threshold is fixed at 0.5".into(),
            ));
        }
        Ok(())
    }
}

/// A connected-or-not region sharing one `(class, instance)` label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Segment {
    pub class_id: u16,
    pub instance_id: u16,
    pub pixel_count: u64,
    /// Crowd region; only ever set on ground-truth segments.
    pub is_ignore: bool,
}

impl Segment {
    pub fn label(&self) -> PanopticLabel {
        PanopticLabel::new(self.class_id, self.instance_id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    DimensionMismatch {
        panoptic: (usize, usize),
        depth: (usize, usize),
    },
    UnknownClass { x: usize, y: usize, class_id: u16 },
    StuffWithInstance {
        x: usize,
        y: usize,
        class_id: u16,
        instance_id: u16,
    },
    VoidWithInstance { x: usize, y: usize, instance_id: u16 },
    InstanceOutOfRange { x: usize, y: usize, instance_id: u16 },
    NegativeDepth { x: usize, y: usize, value: f64 },
    NonFiniteDepth { x: usize, y: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::DimensionMismatch { panoptic, depth } => write!(
                f,
                "dimension mismatch: panoptic {}x{}, depth {}x{}",
                panoptic.0, panoptic.1, depth.0, depth.1
            ),
            Violation::UnknownClass { x, y, class_id } => {
                write!(f, "pixel ({x}, {y}): unknown class id {class_id}")
            }
            Violation::StuffWithInstance {
                x,
                y,
                class_id,
                instance_id,
            } => write!(
                f,
                "pixel ({x}, {y}): stuff class {class_id} carries instance id {instance_id}"
            ),
            Violation::VoidWithInstance { x, y, instance_id } => {
                write!(f, "pixel ({x}, {y}): void carries instance id {instance_id}")
            }
            Violation::InstanceOutOfRange { x, y, instance_id } => write!(
                f,
                "pixel ({x}, {y}): instance id {instance_id} >= {MAX_INSTANCE_ID}"
            ),
            Violation::NegativeDepth { x, y, value } => {
                write!(f, "pixel ({x}, {y}): negative depth {value}")
            }
            Violation::NonFiniteDepth { x, y } => write!(f, "pixel ({x}, {y}): non-finite depth"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

/// Checks every type invariant of a (panoptic, depth) pair. Never fails; an
/// empty report means the pair is well formed.
pub fn validate(pan: &PanopticMap, depth: &DepthMap, classes: &ClassTable) -> ValidationReport {
    let mut violations = Vec::new();
    if pan.dims() != depth.dims() {
        violations.push(Violation::DimensionMismatch {
            panoptic: pan.dims(),
            depth: depth.dims(),
        });
    }
    let width = pan.width.max(1);
    for (i, label) in pan.labels.iter().enumerate() {
        let (x, y) = (i % width, i / width);
        if label.instance_id >= MAX_INSTANCE_ID {
            violations.push(Violation::InstanceOutOfRange {
                x,
                y,
                instance_id: label.instance_id,
            });
        }
        match classes.kind(label.class_id) {
            ClassKind::Unknown => violations.push(Violation::UnknownClass {
                x,
                y,
                class_id: label.class_id,
            }),
            ClassKind::Void if label.instance_id != 0 => {
                violations.push(Violation::VoidWithInstance {
                    x,
                    y,
                    instance_id: label.instance_id,
                })
            }
            ClassKind::Stuff if label.instance_id != 0 => {
                violations.push(Violation::StuffWithInstance {
                    x,
                    y,
                    class_id: label.class_id,
                    instance_id: label.instance_id,
                })
            }
            _ => {}
        }
    }
    let width = depth.width.max(1);
    for (i, &value) in depth.depth.iter().enumerate() {
        let (x, y) = (i % width, i / width);
        if !value.is_finite() {
            violations.push(Violation::NonFiniteDepth { x, y });
        } else if value < 0.0 {
            violations.push(Violation::NegativeDepth { x, y, value });
        }
    }
    ValidationReport { violations }
}

/// Classes present anywhere in the map, void excluded.
pub fn classes_present(pan: &PanopticMap, classes: &ClassTable) -> BTreeSet<u16> {
    pan.labels
        .iter()
        .map(|l| l.class_id)
        .filter(|&c| classes.contains(c))
        .collect()
}
