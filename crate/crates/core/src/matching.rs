//! Segment extraction and class-wise TP/FP/FN matching.
//!
//! A pair `(p, g)` of the same class is a true positive iff
//! `IoU(p, g) > 0.5`, which makes matches unique without tie-breaking. The IoU
//! union discounts predicted pixels that fall on ground-truth void. Unmatched
//! predictions lying mostly (> 50 %) on void or on same-class crowd regions are
//! dropped instead of counted as false positives, and crowd regions are never
//! false negatives.
//!
//! All intersections come from one pass over the two per-pixel segment index
//! grids.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::types::{ClassKind, ClassTable, PanopticLabel, PanopticMap, Segment};

/// Index value for pixels that belong to no segment.
pub const NO_SEGMENT: u32 = u32::MAX;

/// Largest dense pair table, in cells, before falling back to a hash map.
const DENSE_PAIR_LIMIT: usize = 1 << 22;

/// Whether a map is a prediction or ground truth. Only ground truth has crowd
/// regions: a thing pixel with instance id 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentRole {
    Prediction,
    GroundTruth,
}

#[derive(Clone, Debug)]
pub struct SegmentSet {
    segments: Vec<Segment>,
    index: Vec<u32>,
    width: usize,
    height: usize,
    class_fingerprint: u64,
}

impl SegmentSet {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Per-pixel segment index, [`NO_SEGMENT`] for void.
    pub fn index(&self) -> &[u32] {
        &self.index
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn position(&self, label: PanopticLabel) -> Option<usize> {
        self.segments.iter().position(|s| s.label() == label)
    }

    pub fn segment_at(&self, x: usize, y: usize) -> Option<&Segment> {
        match self.index[y * self.width + x] {
            NO_SEGMENT => None,
            i => Some(&self.segments[i as usize]),
        }
    }
}

/// Splits a map into segments: one per `(class, instance)` among thing pixels,
/// one per stuff class. Void and unknown classes belong to no segment.
pub fn extract_segments(pan: &PanopticMap, classes: &ClassTable, role: SegmentRole) -> SegmentSet {
    let mut segments: Vec<Segment> = Vec::new();
    let mut lookup: HashMap<u32, u32> = HashMap::new();
    let mut index = Vec::with_capacity(pan.labels().len());
    let mut last: Option<(u32, u32)> = None;

    for &label in pan.labels() {
        let key = label.key();
        let slot = match last {
            Some((k, slot)) if k == key => slot,
            _ => {
                let slot = match classes.kind(label.class_id) {
                    ClassKind::Void | ClassKind::Unknown => NO_SEGMENT,
                    kind => {
                        let canonical = if kind == ClassKind::Stuff {
                            PanopticLabel::new(label.class_id, 0)
                        } else {
                            label
                        };
                        *lookup.entry(canonical.key()).or_insert_with(|| {
                            segments.push(Segment {
                                class_id: canonical.class_id,
                                instance_id: canonical.instance_id,
                                pixel_count: 0,
                                is_ignore: role == SegmentRole::GroundTruth
                                    && kind == ClassKind::Thing
                                    && canonical.instance_id == 0,
                            });
                            (segments.len() - 1) as u32
                        })
                    }
                };
                last = Some((key, slot));
                slot
            }
        };
        index.push(slot);
    }
    for &slot in &index {
        if slot != NO_SEGMENT {
            segments[slot as usize].pixel_count += 1;
        }
    }
    SegmentSet {
        segments,
        index,
        width: pan.width(),
        height: pan.height(),
        class_fingerprint: classes.fingerprint(),
    }
}

/// IoU of two segments, with predicted pixels on ground-truth void removed
/// from the prediction before the union is formed.
pub fn iou(pred: &Segment, gt: &Segment, pred_set: &SegmentSet, gt_set: &SegmentSet) -> f64 {
    let (Some(p), Some(g)) = (
        pred_set.position(pred.label()),
        gt_set.position(gt.label()),
    ) else {
        return 0.0;
    };
    let (p, g) = (p as u32, g as u32);
    let (mut inter, mut pred_area, mut pred_void, mut gt_area) = (0u64, 0u64, 0u64, 0u64);
    for (&pi, &gi) in pred_set.index.iter().zip(&gt_set.index) {
        if pi == p {
            pred_area += 1;
            if gi == g {
                inter += 1;
            } else if gi == NO_SEGMENT {
                pred_void += 1;
            }
        }
        if gi == g {
            gt_area += 1;
        }
    }
    let union = pred_area + gt_area - inter - pred_void;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pixel co-occurrence counts between two segment index grids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Overlaps {
    pub pred_area: Vec<u64>,
    pub gt_area: Vec<u64>,
    /// Nonzero `(pred, gt, count)` triples sorted by `(pred, gt)`; `gt` may be
    /// [`NO_SEGMENT`] for predicted pixels on ground-truth void.
    pub pairs: Vec<(u32, u32, u64)>,
}

/// Fused counting pass. Pixels with `keep[i] == false` are treated as void in
/// the prediction.
pub fn count_overlaps(
    pred_index: &[u32],
    n_pred: usize,
    gt_index: &[u32],
    n_gt: usize,
    keep: Option<&[bool]>,
) -> Overlaps {
    debug_assert_eq!(pred_index.len(), gt_index.len());
    let gt_stride = n_gt + 1;
    let cells = (n_pred + 1).saturating_mul(gt_stride);
    // Slot n maps NO_SEGMENT so both axes index directly.
    let slot = |i: u32, n: usize| if i == NO_SEGMENT { n } else { i as usize };

    let mut overlaps = Overlaps {
        pred_area: vec![0; n_pred],
        gt_area: vec![0; n_gt],
        pairs: Vec::new(),
    };
    if cells <= DENSE_PAIR_LIMIT {
        let mut table = vec![0u32; cells];
        match keep {
            Some(keep) => {
                for ((&p, &g), &k) in pred_index.iter().zip(gt_index).zip(keep) {
                    let p = if k { p } else { NO_SEGMENT };
                    table[slot(p, n_pred) * gt_stride + slot(g, n_gt)] += 1;
                }
            }
            None => {
                for (&p, &g) in pred_index.iter().zip(gt_index) {
                    table[slot(p, n_pred) * gt_stride + slot(g, n_gt)] += 1;
                }
            }
        }
        for p in 0..=n_pred {
            for g in 0..=n_gt {
                let count = u64::from(table[p * gt_stride + g]);
                if count == 0 {
                    continue;
                }
                if g < n_gt {
                    overlaps.gt_area[g] += count;
                }
                if p < n_pred {
                    overlaps.pred_area[p] += count;
                    let g = if g == n_gt { NO_SEGMENT } else { g as u32 };
                    overlaps.pairs.push((p as u32, g, count));
                }
            }
        }
    } else {
        let mut table: HashMap<(u32, u32), u64> = HashMap::new();
        for (i, (&p, &g)) in pred_index.iter().zip(gt_index).enumerate() {
            let p = match keep {
                Some(keep) if !keep[i] => NO_SEGMENT,
                _ => p,
            };
            if g != NO_SEGMENT {
                overlaps.gt_area[g as usize] += 1;
            }
            if p != NO_SEGMENT {
                overlaps.pred_area[p as usize] += 1;
                *table.entry((p, g)).or_insert(0) += 1;
            }
        }
        overlaps.pairs = table.into_iter().map(|((p, g), c)| (p, g, c)).collect();
        // NO_SEGMENT sorts last within a prediction, as in the dense path.
        overlaps.pairs.sort_unstable();
    }
    overlaps
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruePositive {
    pub pred: Segment,
    pub gt: Segment,
    pub iou: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassMatch {
    pub tp: Vec<TruePositive>,
    pub fp: Vec<Segment>,
    pub fn_: Vec<Segment>,
    /// Unmatched predictions lying mostly on void or crowd; not counted.
    pub dropped: Vec<Segment>,
}

impl ClassMatch {
    pub fn iou_sum(&self) -> f64 {
        self.tp.iter().map(|t| t.iou).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tp.is_empty() && self.fp.is_empty() && self.fn_.is_empty()
    }
}

/// Matching outcome for one frame, keyed by class id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    pub classes: BTreeMap<u16, ClassMatch>,
}

impl MatchResult {
    pub fn class(&self, class_id: u16) -> Option<&ClassMatch> {
        self.classes.get(&class_id)
    }

    pub fn tp_count(&self) -> usize {
        self.classes.values().map(|c| c.tp.len()).sum()
    }

    pub fn fp_count(&self) -> usize {
        self.classes.values().map(|c| c.fp.len()).sum()
    }

    pub fn fn_count(&self) -> usize {
        self.classes.values().map(|c| c.fn_.len()).sum()
    }
}

/// Matches from precomputed overlaps. `pred_segments` supply labels; their
/// pixel counts are replaced by `overlaps.pred_area`, and predictions left
/// with no pixels are skipped.
pub fn match_overlaps(
    pred_segments: &[Segment],
    gt_segments: &[Segment],
    overlaps: &Overlaps,
) -> MatchResult {
    let mut result = MatchResult::default();
    let mut pred_matched = vec![false; pred_segments.len()];
    let mut gt_matched = vec![false; gt_segments.len()];
    let mut pred_ignored = vec![0u64; pred_segments.len()];

    let pred_with_area = |p: usize| Segment {
        pixel_count: overlaps.pred_area[p],
        ..pred_segments[p]
    };

    // Void overlap per prediction comes last in each run of pairs.
    let mut pred_void = vec![0u64; pred_segments.len()];
    for &(p, g, count) in &overlaps.pairs {
        if g == NO_SEGMENT {
            pred_void[p as usize] = count;
        }
    }

    for &(p, g, inter) in &overlaps.pairs {
        if g == NO_SEGMENT {
            pred_ignored[p as usize] += inter;
            continue;
        }
        let (pi, gi) = (p as usize, g as usize);
        let (ps, gs) = (&pred_segments[pi], &gt_segments[gi]);
        if ps.class_id != gs.class_id {
            continue;
        }
        if gs.is_ignore {
            pred_ignored[pi] += inter;
            continue;
        }
        let union = overlaps.pred_area[pi] + overlaps.gt_area[gi] - inter - pred_void[pi];
        let iou = inter as f64 / union as f64;
        if iou > 0.5 {
            pred_matched[pi] = true;
            gt_matched[gi] = true;
            result
                .classes
                .entry(ps.class_id)
                .or_default()
                .tp
                .push(TruePositive {
                    pred: pred_with_area(pi),
                    gt: *gs,
                    iou,
                });
        }
    }

    for (pi, ps) in pred_segments.iter().enumerate() {
        let area = overlaps.pred_area[pi];
        if pred_matched[pi] || area == 0 {
            continue;
        }
        let entry = result.classes.entry(ps.class_id).or_default();
        if pred_ignored[pi] * 2 > area {
            entry.dropped.push(pred_with_area(pi));
        } else {
            entry.fp.push(pred_with_area(pi));
        }
    }
    for (gi, gs) in gt_segments.iter().enumerate() {
        if !gt_matched[gi] && !gs.is_ignore {
            result.classes.entry(gs.class_id).or_default().fn_.push(*gs);
        }
    }
    result
}

pub fn match_segments(
    pred_set: &SegmentSet,
    gt_set: &SegmentSet,
    classes: &ClassTable,
) -> Result<MatchResult> {
    let fingerprint = classes.fingerprint();
    if pred_set.class_fingerprint != fingerprint || gt_set.class_fingerprint != fingerprint {
        return Err(Error::ClassTableMismatch);
    }
    if pred_set.dims() != gt_set.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt_set.dims(),
            found: pred_set.dims(),
        });
    }
    let overlaps = count_overlaps(
        &pred_set.index,
        pred_set.len(),
        &gt_set.index,
        gt_set.len(),
        None,
    );
    Ok(match_overlaps(&pred_set.segments, &gt_set.segments, &overlaps))
}
