//! Depth-filtered panoptic quality (PDC-Q) plus plain PQ/SQ/RQ.
//!
//! For threshold `λ`, predicted pixels whose absolute relative depth error
//! exceeds `λ` are reassigned to void, then prediction and ground truth are
//! matched as in PQ. Per class and horizon:
//!
//! ```text
//! score_c = Σ_{TP_c} IoU / (|TP_c| + ½|FP_c| + ½|FN_c|)
//! ```
//!
//! Counts and IoU sums are accumulated over the whole dataset before the
//! single division, and the horizon score is the mean over evaluated classes.
//! The overall score per `λ` combines horizons (mean by default).
//!
//! [`StatAccumulator`] stores IoU and depth sums in fixed point so that
//! merging is exactly associative and commutative; reports are bit-identical
//! whatever order frames are reduced in.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use serde::Serialize;

use crate::depth::{abs_rel_map, check_lambda, depth_metrics, passes, DepthErrors, DepthMetrics};
use crate::error::{Error, Result};
use crate::matching::{count_overlaps, extract_segments, match_overlaps, MatchResult, SegmentRole, SegmentSet, NO_SEGMENT};
use crate::types::{Aggregation, ClassTable, EvalFrame, FilterMode, PanopticMap, PdcqConfig};

/// Fixed-point sum with 2^-60 resolution. Integer addition keeps merges
/// exactly order independent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactSum(i128);

impl ExactSum {
    const SCALE: f64 = (1u64 << 60) as f64;

    pub fn from_f64(value: f64) -> Self {
        debug_assert!(value.is_finite());
        ExactSum((value * Self::SCALE).round() as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE
    }
}

impl Add for ExactSum {
    type Output = ExactSum;
    fn add(self, rhs: Self) -> Self {
        ExactSum(self.0 + rhs.0)
    }
}

impl AddAssign for ExactSum {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

/// Depth threshold usable as a map key. `+∞` means no filtering (plain PQ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold(pub f64);

impl Threshold {
    pub const UNFILTERED: Threshold = Threshold(f64::INFINITY);

    pub fn is_unfiltered(self) -> bool {
        self.0 == f64::INFINITY
    }
}

impl Eq for Threshold {}

impl PartialOrd for Threshold {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Threshold {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub class_id: u16,
    pub lambda: Threshold,
    pub delta: u32,
}

impl std::hash::Hash for Threshold {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub iou_sum: ExactSum,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassCounts {
    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

impl AddAssign for ClassCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.iou_sum += rhs.iou_sum;
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

/// Per-horizon depth metric sums over frames with at least one valid pixel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DepthSums {
    pub abs_rel: ExactSum,
    pub rmse: ExactSum,
    pub delta1: ExactSum,
    pub delta2: ExactSum,
    pub delta3: ExactSum,
    pub frames: u64,
    pub pixels: u64,
}

impl DepthSums {
    fn add_frame(&mut self, m: &DepthMetrics) {
        if m.is_empty() {
            return;
        }
        self.abs_rel += ExactSum::from_f64(m.abs_rel);
        self.rmse += ExactSum::from_f64(m.rmse);
        self.delta1 += ExactSum::from_f64(m.delta1);
        self.delta2 += ExactSum::from_f64(m.delta2);
        self.delta3 += ExactSum::from_f64(m.delta3);
        self.frames += 1;
        self.pixels += m.valid_pixel_count;
    }

    /// Frame-averaged metrics.
    pub fn mean(&self) -> DepthMetrics {
        if self.frames == 0 {
            return DepthMetrics::EMPTY;
        }
        let n = self.frames as f64;
        DepthMetrics {
            abs_rel: self.abs_rel.to_f64() / n,
            rmse: self.rmse.to_f64() / n,
            delta1: self.delta1.to_f64() / n,
            delta2: self.delta2.to_f64() / n,
            delta3: self.delta3.to_f64() / n,
            valid_pixel_count: self.pixels,
        }
    }
}

impl AddAssign for DepthSums {
    fn add_assign(&mut self, rhs: Self) {
        self.abs_rel += rhs.abs_rel;
        self.rmse += rhs.rmse;
        self.delta1 += rhs.delta1;
        self.delta2 += rhs.delta2;
        self.delta3 += rhs.delta3;
        self.frames += rhs.frames;
        self.pixels += rhs.pixels;
    }
}

/// Mergeable evaluation state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatAccumulator {
    class_fingerprint: u64,
    cells: BTreeMap<CellKey, ClassCounts>,
    depth: BTreeMap<u32, DepthSums>,
    frames: BTreeMap<u32, u64>,
}

impl StatAccumulator {
    pub fn new(classes: &ClassTable) -> Self {
        Self {
            class_fingerprint: classes.fingerprint(),
            cells: BTreeMap::new(),
            depth: BTreeMap::new(),
            frames: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn cells(&self) -> &BTreeMap<CellKey, ClassCounts> {
        &self.cells
    }

    pub fn cell(&self, class_id: u16, lambda: f64, delta: u32) -> ClassCounts {
        self.cells
            .get(&CellKey {
                class_id,
                lambda: Threshold(lambda),
                delta,
            })
            .copied()
            .unwrap_or_default()
    }

    pub fn depth_sums(&self, delta: u32) -> DepthSums {
        self.depth.get(&delta).copied().unwrap_or_default()
    }

    pub fn frame_count(&self, delta: u32) -> u64 {
        self.frames.get(&delta).copied().unwrap_or(0)
    }

    pub fn deltas(&self) -> impl Iterator<Item = u32> + '_ {
        self.frames.keys().copied()
    }

    pub(crate) fn cell_mut(&mut self, key: CellKey) -> &mut ClassCounts {
        self.cells.entry(key).or_default()
    }

    fn add_match(&mut self, result: &MatchResult, lambda: Threshold, delta: u32) {
        for (&class_id, m) in &result.classes {
            if m.is_empty() {
                continue;
            }
            let counts = self.cell_mut(CellKey {
                class_id,
                lambda,
                delta,
            });
            for tp in &m.tp {
                counts.iou_sum += ExactSum::from_f64(tp.iou);
            }
            counts.tp += m.tp.len() as u64;
            counts.fp += m.fp.len() as u64;
            counts.fn_ += m.fn_.len() as u64;
        }
    }

    fn add_frame(&mut self, delta: u32, depth: &DepthMetrics) {
        *self.frames.entry(delta).or_default() += 1;
        self.depth.entry(delta).or_default().add_frame(depth);
    }

    pub fn merge_from(&mut self, other: &StatAccumulator) -> Result<()> {
        if self.class_fingerprint != other.class_fingerprint {
            return Err(Error::ClassTableMismatch);
        }
        for (key, counts) in &other.cells {
            *self.cells.entry(*key).or_default() += *counts;
        }
        for (delta, sums) in &other.depth {
            *self.depth.entry(*delta).or_default() += *sums;
        }
        for (delta, n) in &other.frames {
            *self.frames.entry(*delta).or_default() += n;
        }
        Ok(())
    }
}

/// Field-wise sum of two accumulators.
pub fn merge(a: &StatAccumulator, b: &StatAccumulator) -> Result<StatAccumulator> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

/// Copy of `pred_pan` with every pixel where `inliers` is false set to void.
pub fn apply_depth_filter(pred_pan: &PanopticMap, inliers: &[bool], classes: &ClassTable) -> Result<PanopticMap> {
    if inliers.len() != pred_pan.labels().len() {
        return Err(Error::DimensionMismatch {
            expected: pred_pan.dims(),
            found: (inliers.len(), 1),
        });
    }
    let void = classes.void_label();
    let labels = pred_pan
        .labels()
        .iter()
        .zip(inliers)
        .map(|(&l, &keep)| if keep { l } else { void })
        .collect();
    PanopticMap::new(pred_pan.width(), pred_pan.height(), labels)
}

/// Work shared by all thresholds of one frame.
struct FramePrep {
    errors: DepthErrors,
    pred: SegmentSet,
    gt: SegmentSet,
    depth: DepthMetrics,
}

impl FramePrep {
    fn new(frame: &EvalFrame, classes: &ClassTable, config: &PdcqConfig) -> Result<Self> {
        frame.check_dims()?;
        Ok(Self {
            errors: abs_rel_map(&frame.pred_depth, &frame.gt_depth, config)?,
            pred: extract_segments(&frame.pred_pan, classes, SegmentRole::Prediction),
            gt: extract_segments(&frame.gt_pan, classes, SegmentRole::GroundTruth),
            depth: depth_metrics(&frame.pred_depth, &frame.gt_depth, config)?,
        })
    }

    fn match_at(&self, lambda: Threshold, config: &PdcqConfig) -> MatchResult {
        match config.filter_mode {
            FilterMode::PerPixel => {
                let keep: Option<Vec<bool>> = (!lambda.is_unfiltered()).then(|| {
                    self.errors
                        .errors()
                        .iter()
                        .zip(self.errors.valid())
                        .map(|(&e, &v)| !v || passes(e, lambda.0, config.inlier_boundary))
                        .collect()
                });
                let overlaps = count_overlaps(
                    self.pred.index(),
                    self.pred.len(),
                    self.gt.index(),
                    self.gt.len(),
                    keep.as_deref(),
                );
                match_overlaps(self.pred.segments(), self.gt.segments(), &overlaps)
            }
            FilterMode::SegmentMean => {
                let overlaps = count_overlaps(self.pred.index(), self.pred.len(), self.gt.index(), self.gt.len(), None);
                let mut result = match_overlaps(self.pred.segments(), self.gt.segments(), &overlaps);
                if lambda.is_unfiltered() {
                    return result;
                }
                let means = self.segment_mean_errors();
                for m in result.classes.values_mut() {
                    let (keep, demoted): (Vec<_>, Vec<_>) = m.tp.drain(..).partition(|tp| {
                        let i = self.pred.position(tp.pred.label()).expect("matched segment exists");
                        means[i].is_none_or(|e| passes(e, lambda.0, config.inlier_boundary))
                    });
                    m.tp = keep;
                    for tp in demoted {
                        m.fp.push(tp.pred);
                        m.fn_.push(tp.gt);
                    }
                }
                result
            }
        }
    }

    /// Mean abs-rel error per predicted segment over its valid pixels.
    fn segment_mean_errors(&self) -> Vec<Option<f64>> {
        let mut sums = vec![(0.0f64, 0u64); self.pred.len()];
        for ((&seg, &e), &v) in self.pred.index().iter().zip(self.errors.errors()).zip(self.errors.valid()) {
            if v && seg != NO_SEGMENT {
                let s = &mut sums[seg as usize];
                s.0 += e;
                s.1 += 1;
            }
        }
        sums.into_iter()
            .map(|(sum, n)| (n > 0).then(|| sum / n as f64))
            .collect()
    }
}

/// Statistics of one frame at one threshold. Depth metrics are recorded as
/// well, so do not merge results for several thresholds of the same frame;
/// use [`frame_stats_all`] for that.
pub fn frame_stats(
    frame: &EvalFrame,
    lambda: f64,
    classes: &ClassTable,
    config: &PdcqConfig,
) -> Result<StatAccumulator> {
    check_lambda(lambda)?;
    let prep = FramePrep::new(frame, classes, config)?;
    let mut acc = StatAccumulator::new(classes);
    let lambda = Threshold(lambda);
    acc.add_match(&prep.match_at(lambda, config), lambda, frame.delta);
    acc.add_frame(frame.delta, &prep.depth);
    Ok(acc)
}

/// Statistics of one frame at every configured threshold plus the unfiltered
/// PQ pass.
pub fn frame_stats_all(frame: &EvalFrame, classes: &ClassTable, config: &PdcqConfig) -> Result<StatAccumulator> {
    let prep = FramePrep::new(frame, classes, config)?;
    let mut acc = StatAccumulator::new(classes);
    for lambda in std::iter::once(Threshold::UNFILTERED).chain(config.lambdas.iter().map(|&l| Threshold(l))) {
        acc.add_match(&prep.match_at(lambda, config), lambda, frame.delta);
    }
    acc.add_frame(frame.delta, &prep.depth);
    Ok(acc)
}

/// Evaluates frames on the current rayon pool and reduces with [`merge`].
pub fn evaluate_frames(frames: &[EvalFrame], classes: &ClassTable, config: &PdcqConfig) -> Result<StatAccumulator> {
    config.validate()?;
    frames
        .par_iter()
        .map(|f| frame_stats_all(f, classes, config))
        .try_reduce(|| StatAccumulator::new(classes), |a, b| merge(&a, &b))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scores {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    /// Number of classes averaged.
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassScore {
    pub class_id: u16,
    pub name: String,
    pub is_thing: bool,
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Breakdown {
    pub all: Scores,
    pub things: Scores,
    pub stuff: Scores,
    pub per_class: Vec<ClassScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaCell {
    pub lambda: f64,
    pub pdcq: f64,
    pub breakdown: Breakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HorizonReport {
    pub delta: u32,
    pub frames: u64,
    /// Depth-blind panoptic quality.
    pub pq: Breakdown,
    pub pdcq: Vec<LambdaCell>,
    /// Mean PDC-Q over thresholds at this horizon.
    pub pdcq_avg: f64,
    /// Per-frame depth metrics averaged over frames.
    pub depth: DepthMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverallScore {
    pub lambda: f64,
    pub pdcq: f64,
}

/// Scores are percentages.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PdcqReport {
    pub lambdas: Vec<f64>,
    pub deltas: Vec<u32>,
    pub aggregation: Aggregation,
    pub filter_mode: FilterMode,
    pub horizons: Vec<HorizonReport>,
    pub overall: Vec<OverallScore>,
    /// Mean of `overall` over thresholds.
    pub overall_avg: f64,
}

impl PdcqReport {
    pub fn horizon(&self, delta: u32) -> Option<&HorizonReport> {
        self.horizons.iter().find(|h| h.delta == delta)
    }

    pub fn pdcq(&self, lambda: f64, delta: u32) -> Option<f64> {
        self.horizon(delta)?
            .pdcq
            .iter()
            .find(|c| c.lambda == lambda)
            .map(|c| c.pdcq)
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        (0.0, 0)
    } else {
        (sum / n as f64, n)
    }
}

fn subset_scores<'a>(scores: impl Iterator<Item = &'a ClassScore> + Clone) -> Scores {
    let (pq, classes) = mean(scores.clone().map(|c| c.pq));
    let (sq, _) = mean(scores.clone().map(|c| c.sq));
    let (rq, _) = mean(scores.map(|c| c.rq));
    Scores { pq, sq, rq, classes }
}

fn breakdown(acc: &StatAccumulator, classes: &ClassTable, lambda: Threshold, delta: u32) -> Breakdown {
    let per_class: Vec<ClassScore> = classes
        .classes()
        .iter()
        .filter_map(|info| {
            let counts = acc.cells.get(&CellKey {
                class_id: info.id,
                lambda,
                delta,
            })?;
            if counts.is_empty() {
                return None;
            }
            let iou_sum = counts.iou_sum.to_f64();
            let denom = counts.tp as f64 + 0.5 * counts.fp as f64 + 0.5 * counts.fn_ as f64;
            let sq = if counts.tp > 0 { iou_sum / counts.tp as f64 } else { 0.0 };
            Some(ClassScore {
                class_id: info.id,
                name: info.name.clone(),
                is_thing: info.is_thing,
                pq: 100.0 * iou_sum / denom,
                sq: 100.0 * sq,
                rq: 100.0 * counts.tp as f64 / denom,
                tp: counts.tp,
                fp: counts.fp,
                fn_: counts.fn_,
            })
        })
        .collect();
    Breakdown {
        all: subset_scores(per_class.iter()),
        things: subset_scores(per_class.iter().filter(|c| c.is_thing)),
        stuff: subset_scores(per_class.iter().filter(|c| !c.is_thing)),
        per_class,
    }
}

pub fn finalize(acc: &StatAccumulator, classes: &ClassTable, config: &PdcqConfig) -> Result<PdcqReport> {
    if acc.is_empty() {
        return Err(Error::EmptyAccumulator);
    }
    if acc.class_fingerprint != classes.fingerprint() {
        return Err(Error::ClassTableMismatch);
    }
    config.validate()?;
    let deltas: Vec<u32> = acc.deltas().collect();
    let horizons: Vec<HorizonReport> = deltas
        .iter()
        .map(|&delta| {
            let pdcq: Vec<LambdaCell> = config
                .lambdas
                .iter()
                .map(|&lambda| {
                    let breakdown = breakdown(acc, classes, Threshold(lambda), delta);
                    LambdaCell {
                        lambda,
                        pdcq: breakdown.all.pq,
                        breakdown,
                    }
                })
                .collect();
            HorizonReport {
                delta,
                frames: acc.frame_count(delta),
                pq: breakdown(acc, classes, Threshold::UNFILTERED, delta),
                pdcq_avg: mean(pdcq.iter().map(|c| c.pdcq)).0,
                pdcq,
                depth: acc.depth_sums(delta).mean(),
            }
        })
        .collect();
    let overall: Vec<OverallScore> = config
        .lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let per_horizon = horizons.iter().map(|h| h.pdcq[i].pdcq);
            let pdcq = match config.overall_aggregation {
                Aggregation::Mean => mean(per_horizon).0,
                Aggregation::Sum => per_horizon.sum(),
            };
            OverallScore { lambda, pdcq }
        })
        .collect();
    Ok(PdcqReport {
        lambdas: config.lambdas.clone(),
        deltas,
        aggregation: config.overall_aggregation,
        filter_mode: config.filter_mode,
        overall_avg: mean(overall.iter().map(|o| o.pdcq)).0,
        overall,
        horizons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::match_segments;
    use crate::types::fixtures::{pan, table};
    use crate::types::DepthMap;
    use proptest::prelude::*;

    fn frame(pred: PanopticMap, gt: PanopticMap, pred_depth: DepthMap, gt_depth: DepthMap, delta: u32) -> EvalFrame {
        EvalFrame {
            sequence_id: "s".into(),
            t: 0,
            delta,
            pred_pan: pred,
            pred_depth,
            gt_pan: gt,
            gt_depth,
        }
    }

    fn flat(map: &PanopticMap, d: f64) -> DepthMap {
        DepthMap::filled(map.width(), map.height(), d)
    }

    #[test]
    fn exact_sum_is_order_free() {
        let values = [0.1, 0.7, 1.0 / 3.0, 0.999_999_9, 2e-9];
        let forward = values.iter().fold(ExactSum::default(), |s, &v| s + ExactSum::from_f64(v));
        let backward = values.iter().rev().fold(ExactSum::default(), |s, &v| s + ExactSum::from_f64(v));
        assert_eq!(forward, backward);
        assert!((forward.to_f64() - values.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn filter_identity_and_all_void() {
        let classes = table();
        let map = pan(&[&[7000, 26001], &[26001, 11000]]);
        assert_eq!(apply_depth_filter(&map, &[true; 4], &classes).unwrap(), map);
        let void = apply_depth_filter(&map, &[false; 4], &classes).unwrap();
        assert!(void.labels().iter().all(|&l| l == classes.void_label()));
        assert!(apply_depth_filter(&map, &[true; 3], &classes).is_err());
    }

    #[test]
    fn filtered_segment_shrinks() {
        let classes = table();
        let map = pan(&[&[26001, 26001, 26001, 26001], &[7000, 7000, 7000, 7000]]);
        let keep = [true, true, false, false, true, true, true, true];
        let filtered = apply_depth_filter(&map, &keep, &classes).unwrap();
        // Re-extraction oracle: count the car label directly.
        let count = filtered
            .labels()
            .iter()
            .filter(|l| l.class_id == 26 && l.instance_id == 1)
            .count();
        assert_eq!(count, 2);
        let set = extract_segments(&filtered, &classes, SegmentRole::Prediction);
        let car = set.segments().iter().find(|s| s.class_id == 26).unwrap();
        assert_eq!(car.pixel_count, 2);
    }

    #[test]
    fn perfect_prediction_stats() {
        let classes = table();
        let map = pan(&[&[7000, 26001, 26001], &[11000, 24002, 65535]]);
        let depth = flat(&map, 10.0);
        let f = frame(map.clone(), map, depth.clone(), depth, 1);
        let acc = frame_stats(&f, 0.1, &classes, &PdcqConfig::default()).unwrap();
        for counts in acc.cells().values() {
            assert_eq!((counts.fp, counts.fn_), (0, 0));
            assert_eq!(counts.iou_sum.to_f64(), counts.tp as f64);
        }
        assert_eq!(acc.cells().len(), 4);
    }

    #[test]
    fn single_tp_scores_its_iou() {
        let classes = table();
        // GT car 4 px; pred car covers 3 of them; IoU = 3/4.
        let gt = pan(&[&[26001, 26001, 26001, 26001]]);
        let pred = pan(&[&[26001, 26001, 26001, 65535]]);
        let f = frame(pred.clone(), gt.clone(), flat(&pred, 5.0), flat(&gt, 5.0), 1);
        let config = PdcqConfig::default();
        let acc = frame_stats_all(&f, &classes, &config).unwrap();
        let report = finalize(&acc, &classes, &config).unwrap();
        assert_eq!(report.pdcq(0.1, 1), Some(75.0));
    }

    #[test]
    fn tighter_threshold_can_score_higher() {
        // The car overhangs one road pixel with error 0.25. At 0.5 it stays
        // (car IoU 4/5); at 0.1 it is voided and the car matches exactly.
        // The road is 3/4 either way: 77.5 at 0.5, 87.5 at 0.1.
        let classes = table();
        let gt = pan(&[&[26001, 26001, 26001, 26001, 7000, 7000, 7000, 7000]]);
        let pred = pan(&[&[26001, 26001, 26001, 26001, 26001, 7000, 7000, 7000]]);
        let gt_depth = crate::types::DepthMap::new(8, 1, vec![10.0, 10.0, 10.0, 10.0, 20.0, 20.0, 20.0, 20.0]).unwrap();
        let pred_depth = crate::types::DepthMap::new(8, 1, vec![10.0, 10.0, 10.0, 10.0, 15.0, 20.0, 20.0, 20.0]).unwrap();
        let f = frame(pred, gt, pred_depth, gt_depth, 1);
        let config = PdcqConfig::default();
        let report = finalize(&frame_stats_all(&f, &classes, &config).unwrap(), &classes, &config).unwrap();
        assert!((report.pdcq(0.5, 1).unwrap() - 77.5).abs() < 1e-12);
        assert!((report.pdcq(0.1, 1).unwrap() - 87.5).abs() < 1e-12);

        let strict = PdcqConfig {
            filter_mode: FilterMode::SegmentMean,
            ..PdcqConfig::default()
        };
        let report = finalize(&frame_stats_all(&f, &classes, &strict).unwrap(), &classes, &strict).unwrap();
        let scores: Vec<f64> = [0.1, 0.25, 0.5].iter().map(|&l| report.pdcq(l, 1).unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] <= w[1]), "{scores:?}");
    }

    #[test]
    fn tp_plus_fp_score() {
        let classes = table();
        // Car IoU 4/5 plus a stray car on GT road; road itself matches.
        let gt = pan(&[&[26001, 26001, 26001, 26001, 26001, 7000, 7000, 7000, 7000, 7000]]);
        let pred = pan(&[&[26001, 26001, 26001, 26001, 7000, 7000, 7000, 7000, 7000, 26002]]);
        let f = frame(pred.clone(), gt.clone(), flat(&pred, 5.0), flat(&gt, 5.0), 1);
        let config = PdcqConfig::default();
        let acc = frame_stats_all(&f, &classes, &config).unwrap();
        let car = acc.cell(26, 0.25, 1);
        assert_eq!((car.tp, car.fp, car.fn_), (1, 1, 0));
        let report = finalize(&acc, &classes, &config).unwrap();
        let car_score = report.horizons[0].pdcq[1]
            .breakdown
            .per_class
            .iter()
            .find(|c| c.class_id == 26)
            .unwrap()
            .pq;
        let brute = 100.0 * 0.8 / (1.0 + 0.5);
        assert!((car_score - brute).abs() < 1e-12);
        assert!((car_score - 53.33).abs() < 0.01);
    }

    #[test]
    fn overall_mean_over_horizons() {
        let classes = table();
        let mut acc = StatAccumulator::new(&classes);
        for (delta, iou) in [(1u32, 0.4), (3, 0.3), (5, 0.2)] {
            let key = CellKey {
                class_id: 7,
                lambda: Threshold(0.1),
                delta,
            };
            *acc.cell_mut(key) = ClassCounts {
                iou_sum: ExactSum::from_f64(iou),
                tp: 1,
                fp: 0,
                fn_: 0,
            };
            acc.add_frame(delta, &DepthMetrics::EMPTY);
        }
        let config = PdcqConfig {
            lambdas: vec![0.1],
            ..PdcqConfig::default()
        };
        let report = finalize(&acc, &classes, &config).unwrap();
        let per: Vec<f64> = report.horizons.iter().map(|h| h.pdcq[0].pdcq).collect();
        assert!((per[0] - 40.0).abs() < 1e-12 && (per[1] - 30.0).abs() < 1e-12 && (per[2] - 20.0).abs() < 1e-12);
        assert!((report.overall[0].pdcq - 30.0).abs() < 1e-12);

        let summed = finalize(&acc, &classes, &PdcqConfig { overall_aggregation: Aggregation::Sum, ..config }).unwrap();
        assert!((summed.overall[0].pdcq - 90.0).abs() < 1e-12);
    }

    #[test]
    fn single_pair_identity() {
        let classes = table();
        let mut acc = StatAccumulator::new(&classes);
        *acc.cell_mut(CellKey {
            class_id: 26,
            lambda: Threshold(0.5),
            delta: 1,
        }) = ClassCounts {
            iou_sum: ExactSum::from_f64(0.6),
            tp: 1,
            fp: 0,
            fn_: 0,
        };
        acc.add_frame(1, &DepthMetrics::EMPTY);
        let config = PdcqConfig {
            lambdas: vec![0.5],
            ..PdcqConfig::default()
        };
        let report = finalize(&acc, &classes, &config).unwrap();
        let cell = &report.horizons[0].pdcq[0].breakdown;
        let car = &cell.per_class[0];
        assert!((car.pq - 60.0).abs() < 1e-12);
        assert!((car.sq - 60.0).abs() < 1e-12);
        assert_eq!(car.rq, 100.0);
        assert!((car.pq - car.sq * car.rq / 100.0).abs() < 1e-9);
        assert_eq!(cell.things.classes, 1);
        assert_eq!(cell.stuff.classes, 0);
    }

    #[test]
    fn empty_accumulator_rejected() {
        let classes = table();
        assert!(matches!(
            finalize(&StatAccumulator::new(&classes), &classes, &PdcqConfig::default()),
            Err(Error::EmptyAccumulator)
        ));
    }

    #[test]
    fn segment_mean_mode_demotes_bad_depth() {
        let classes = table();
        let map = pan(&[&[26001, 26001, 7000, 7000]]);
        let gt_depth = flat(&map, 10.0);
        let pred_depth = DepthMap::new(4, 1, vec![13.0, 13.0, 10.0, 10.0]).unwrap();
        let f = frame(map.clone(), map, pred_depth, gt_depth, 1);
        let config = PdcqConfig {
            filter_mode: FilterMode::SegmentMean,
            ..PdcqConfig::default()
        };
        let acc = frame_stats_all(&f, &classes, &config).unwrap();
        let at = |l: f64| acc.cell(26, l, 1);
        assert_eq!((at(0.1).tp, at(0.1).fp, at(0.1).fn_), (0, 1, 1));
        assert_eq!((at(0.25).tp, at(0.25).fp, at(0.25).fn_), (0, 1, 1));
        assert_eq!((at(0.5).tp, at(0.5).fp, at(0.5).fn_), (1, 0, 0));
        assert_eq!(acc.cell(7, 0.1, 1).tp, 1);
    }

    fn random_frame() -> impl Strategy<Value = EvalFrame> {
        let label = prop_oneof![
            Just(7000u32),
            Just(11000u32),
            Just(65535u32),
            (1u32..4).prop_map(|i| 26000 + i),
            (0u32..3).prop_map(|i| 24000 + i),
        ];
        let depth = prop_oneof![Just(0.0), 1.0f64..30.0];
        (2usize..9, 2usize..9).prop_flat_map(move |(w, h)| {
            let n = w * h;
            (
                prop::collection::vec(label.clone(), n),
                prop::collection::vec(label.clone(), n),
                prop::collection::vec(depth.clone(), n),
                prop::collection::vec(depth.clone(), n),
            )
                .prop_map(move |(p, g, pd, gd)| {
                    let to_map = |v: Vec<u32>| {
                        let rows: Vec<&[u32]> = v.chunks(w).collect();
                        pan(&rows)
                    };
                    frame(
                        to_map(p),
                        to_map(g),
                        DepthMap::new(w, h, pd).unwrap(),
                        DepthMap::new(w, h, gd).unwrap(),
                        1,
                    )
                })
        })
    }

    proptest! {
        /// The fused per-threshold pass equals the literal
        /// filter -> extract -> match pipeline.
        #[test]
        fn fast_path_matches_literal_pipeline(f in random_frame(), lambda in prop_oneof![Just(0.1), Just(0.25), Just(0.5)]) {
            let classes = table();
            let config = PdcqConfig::default();
            let errors = abs_rel_map(&f.pred_depth, &f.gt_depth, &config).unwrap();
            let inliers = crate::depth::inlier_mask(&errors, lambda).unwrap();
            let filtered = apply_depth_filter(&f.pred_pan, &inliers, &classes).unwrap();
            let literal = match_segments(
                &extract_segments(&filtered, &classes, SegmentRole::Prediction),
                &extract_segments(&f.gt_pan, &classes, SegmentRole::GroundTruth),
                &classes,
            ).unwrap();
            let acc = frame_stats(&f, lambda, &classes, &config).unwrap();
            for class in classes.classes() {
                let counts = acc.cell(class.id, lambda, 1);
                let m = literal.class(class.id).cloned().unwrap_or_default();
                prop_assert_eq!(counts.tp, m.tp.len() as u64);
                prop_assert_eq!(counts.fp, m.fp.len() as u64);
                prop_assert_eq!(counts.fn_, m.fn_.len() as u64);
                prop_assert!((counts.iou_sum.to_f64() - m.iou_sum()).abs() < 1e-15);
            }
        }

        #[test]
        fn merge_is_commutative_and_associative(a in random_frame(), b in random_frame(), c in random_frame()) {
            let classes = table();
            let config = PdcqConfig::default();
            let (a, b, c) = (
                frame_stats_all(&a, &classes, &config).unwrap(),
                frame_stats_all(&b, &classes, &config).unwrap(),
                frame_stats_all(&c, &classes, &config).unwrap(),
            );
            prop_assert_eq!(merge(&a, &b).unwrap(), merge(&b, &a).unwrap());
            prop_assert_eq!(
                merge(&merge(&a, &b).unwrap(), &c).unwrap(),
                merge(&a, &merge(&b, &c).unwrap()).unwrap()
            );
            prop_assert_eq!(merge(&a, &StatAccumulator::new(&classes)).unwrap(), a.clone());
        }

        #[test]
        fn report_invariants(f in random_frame()) {
            let classes = table();
            let config = PdcqConfig::default();
            let acc = frame_stats_all(&f, &classes, &config).unwrap();
            let report = finalize(&acc, &classes, &config).unwrap();
            let h = &report.horizons[0];
            for b in std::iter::once(&h.pq).chain(h.pdcq.iter().map(|c| &c.breakdown)) {
                for s in [&b.all, &b.things, &b.stuff] {
                    prop_assert!((0.0..=100.0).contains(&s.pq));
                }
                for c in &b.per_class {
                    prop_assert!((0.0..=100.0).contains(&c.pq));
                    if c.rq > 0.0 {
                        prop_assert!((c.pq - c.sq * c.rq / 100.0).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn merge_rejects_other_table() {
        let classes = table();
        let other = ClassTable::new(vec![], 0).unwrap();
        assert!(matches!(
            merge(&StatAccumulator::new(&classes), &StatAccumulator::new(&other)),
            Err(Error::ClassTableMismatch)
        ));
    }
}
