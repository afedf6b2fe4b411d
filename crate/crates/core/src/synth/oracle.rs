//! Naive reference implementations of PQ and PDC-Q.
//!
//! Everything here works on explicit pixel sets and all-pairs enumeration and
//! shares no code with [`crate::matching`] or [`crate::pdcq`]. It exists to be
//! compared against them.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{ClassTable, DepthMap, PanopticMap, PdcqConfig};

pub const MAX_ORACLE_SIZE: usize = 64;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OracleClass {
    pub iou_sum: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl OracleClass {
    /// Percent; `None` when the class has nothing to score.
    pub fn score(&self) -> Option<f64> {
        let denom = self.tp as f64 + self.fp as f64 / 2.0 + self.fn_ as f64 / 2.0;
        (denom > 0.0).then(|| 100.0 * self.iou_sum / denom)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OracleScores {
    pub per_class: BTreeMap<u16, OracleClass>,
}

impl OracleScores {
    /// Mean score over classes that have anything to score.
    pub fn mean(&self) -> f64 {
        let scores: Vec<f64> = self.per_class.values().filter_map(OracleClass::score).collect();
        if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        }
    }

    pub fn score(&self, class_id: u16) -> Option<f64> {
        self.per_class.get(&class_id).and_then(OracleClass::score)
    }
}

struct Region {
    class_id: u16,
    crowd: bool,
    pixels: BTreeSet<usize>,
}

/// Groups pixels by label. Stuff pixels group by class alone.
fn regions(pan: &PanopticMap, classes: &ClassTable, crowd_allowed: bool) -> Vec<Region> {
    let mut groups: BTreeMap<(u16, u16), BTreeSet<usize>> = BTreeMap::new();
    for (i, label) in pan.labels().iter().enumerate() {
        let Some(info) = classes.get(label.class_id) else {
            continue;
        };
        let instance = if info.is_thing { label.instance_id } else { 0 };
        groups.entry((label.class_id, instance)).or_default().insert(i);
    }
    groups
        .into_iter()
        .map(|((class_id, instance), pixels)| Region {
            class_id,
            crowd: crowd_allowed && classes.is_thing(class_id) && instance == 0,
            pixels,
        })
        .collect()
}

fn check_size(pan: &PanopticMap) -> Result<()> {
    if pan.width() > MAX_ORACLE_SIZE || pan.height() > MAX_ORACLE_SIZE {
        return Err(Error::MapTooLarge {
            width: pan.width(),
            height: pan.height(),
            max: MAX_ORACLE_SIZE,
        });
    }
    Ok(())
}

/// Per-class PQ tallies from the textbook definition.
pub fn brute_force_pq(pred: &PanopticMap, gt: &PanopticMap, classes: &ClassTable) -> Result<OracleScores> {
    check_size(pred)?;
    check_size(gt)?;
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: pred.dims(),
        });
    }
    let preds = regions(pred, classes, false);
    let gts = regions(gt, classes, true);
    let gt_void: BTreeSet<usize> = gt
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| classes.get(l.class_id).is_none())
        .map(|(i, _)| i)
        .collect();

    let mut scores = OracleScores::default();
    let mut gt_used = vec![false; gts.len()];
    for p in &preds {
        let mut matched = false;
        for (gi, g) in gts.iter().enumerate() {
            if g.class_id != p.class_id || g.crowd {
                continue;
            }
            let inter = p.pixels.intersection(&g.pixels).count();
            let on_void = p.pixels.intersection(&gt_void).count();
            let union = p.pixels.len() + g.pixels.len() - inter - on_void;
            let iou = inter as f64 / union as f64;
            if iou > 0.5 {
                let entry = scores.per_class.entry(p.class_id).or_default();
                entry.tp += 1;
                entry.iou_sum += iou;
                gt_used[gi] = true;
                matched = true;
            }
        }
        if matched {
            continue;
        }
        let mut ignored = p.pixels.intersection(&gt_void).count();
        for g in gts.iter().filter(|g| g.crowd && g.class_id == p.class_id) {
            ignored += p.pixels.intersection(&g.pixels).count();
        }
        if ignored as f64 / p.pixels.len() as f64 > 0.5 {
            continue;
        }
        scores.per_class.entry(p.class_id).or_default().fp += 1;
    }
    for (gi, g) in gts.iter().enumerate() {
        if !g.crowd && !gt_used[gi] {
            scores.per_class.entry(g.class_id).or_default().fn_ += 1;
        }
    }
    scores.per_class.retain(|_, c| c.tp + c.fp + c.fn_ > 0);
    Ok(scores)
}

/// Voids every predicted pixel whose ground-truth depth is usable and whose
/// absolute relative error exceeds `lambda`, then scores with
/// [`brute_force_pq`].
pub fn brute_force_pdcq(
    pred: (&PanopticMap, &DepthMap),
    gt: (&PanopticMap, &DepthMap),
    lambda: f64,
    classes: &ClassTable,
    config: &PdcqConfig,
) -> Result<OracleScores> {
    let (pred_pan, pred_depth) = pred;
    let (gt_pan, gt_depth) = gt;
    if pred_depth.dims() != gt_depth.dims() || pred_depth.dims() != pred_pan.dims() {
        return Err(Error::DimensionMismatch {
            expected: pred_pan.dims(),
            found: pred_depth.dims(),
        });
    }
    let mut filtered = pred_pan.clone();
    for y in 0..pred_pan.height() {
        for x in 0..pred_pan.width() {
            let g = gt_depth.get(x, y);
            if g <= 0.0 || g < config.min_depth || g > config.max_depth {
                continue;
            }
            let error = (pred_depth.get(x, y) - g).abs() / g;
            if error > lambda {
                filtered.set(x, y, classes.void_label());
            }
        }
    }
    brute_force_pq(&filtered, gt_pan, classes)
}

/// First disagreement found by [`differential_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Divergence {
    pub trial: usize,
    pub case_seed: u64,
    /// `None` for the depth-blind PQ pass.
    pub lambda: Option<f64>,
    /// `None` for the class-averaged score.
    pub class_id: Option<u16>,
    pub pipeline: Option<f64>,
    pub oracle: Option<f64>,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lambda = self.lambda.map_or("inf".to_string(), |l| l.to_string());
        let class = self.class_id.map_or("mean".to_string(), |c| c.to_string());
        write!(
            f,
            "trial {} (seed {}): class {class}, lambda {lambda}: pipeline {:?} vs oracle {:?}",
            self.trial, self.case_seed, self.pipeline, self.oracle
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckSummary {
    pub trials: usize,
    pub checks: usize,
    pub max_abs_diff: f64,
    pub divergence: Option<Divergence>,
}

/// Deliberate corruption of the pipeline side, for testing the checker. The
/// offset lands on the depth-filtered scores of one trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultInjection {
    pub trial: usize,
    pub offset: f64,
}

pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// Per-instance seed for trial `i` of a run seeded with `seed`.
pub fn case_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(trial as u64)
}

/// Scores `trials` random cases with the production pipeline and with the
/// brute-force oracles at every threshold in `lambdas` plus the depth-blind
/// pass, comparing every per-class score and the class mean.
pub fn differential_check(
    size: usize,
    trials: usize,
    seed: u64,
    lambdas: &[f64],
    fault: Option<FaultInjection>,
) -> Result<CheckSummary> {
    use crate::pdcq::{finalize, frame_stats_all};
    use crate::synth::random_case;
    use crate::types::EvalFrame;

    if size > MAX_ORACLE_SIZE {
        return Err(Error::MapTooLarge {
            width: size,
            height: size,
            max: MAX_ORACLE_SIZE,
        });
    }
    let config = PdcqConfig {
        lambdas: lambdas.to_vec(),
        ..PdcqConfig::default()
    };
    config.validate()?;
    let mut summary = CheckSummary {
        trials,
        checks: 0,
        max_abs_diff: 0.0,
        divergence: None,
    };
    for trial in 0..trials {
        let case_seed = case_seed(seed, trial);
        let case = random_case(size, case_seed);
        let frame = EvalFrame {
            sequence_id: "oracle".into(),
            t: 0,
            delta: 1,
            pred_pan: case.pred_pan.clone(),
            pred_depth: case.pred_depth.clone(),
            gt_pan: case.gt_pan.clone(),
            gt_depth: case.gt_depth.clone(),
        };
        let report = finalize(&frame_stats_all(&frame, &case.classes, &config)?, &case.classes, &config)?;
        let horizon = &report.horizons[0];

        let passes = std::iter::once((None, &horizon.pq)).chain(
            horizon
                .pdcq
                .iter()
                .map(|cell| (Some(cell.lambda), &cell.breakdown)),
        );
        for (lambda, breakdown) in passes {
            let oracle = match lambda {
                None => brute_force_pq(&case.pred_pan, &case.gt_pan, &case.classes)?,
                Some(l) => brute_force_pdcq(
                    (&case.pred_pan, &case.pred_depth),
                    (&case.gt_pan, &case.gt_depth),
                    l,
                    &case.classes,
                    &config,
                )?,
            };
            let mut pipeline: BTreeMap<u16, f64> =
                breakdown.per_class.iter().map(|c| (c.class_id, c.pq)).collect();
            let mut pipeline_mean = breakdown.all.pq;
            if let Some(f) = fault.filter(|f| f.trial == trial && lambda.is_some()) {
                if let Some(first) = pipeline.values_mut().next() {
                    *first += f.offset;
                }
                pipeline_mean += f.offset;
            }
            let class_ids: BTreeSet<u16> =
                pipeline.keys().chain(oracle.per_class.keys()).copied().collect();
            let comparisons = class_ids
                .into_iter()
                .map(|c| (Some(c), pipeline.get(&c).copied(), oracle.score(c)))
                .chain(std::iter::once((None, Some(pipeline_mean), Some(oracle.mean()))));
            for (class_id, p, o) in comparisons {
                summary.checks += 1;
                let agree = match (p, o) {
                    (Some(p), Some(o)) => {
                        let diff = (p - o).abs();
                        summary.max_abs_diff = summary.max_abs_diff.max(diff);
                        diff <= ORACLE_TOLERANCE
                    }
                    (None, None) => true,
                    _ => false,
                };
                if !agree && summary.divergence.is_none() {
                    summary.divergence = Some(Divergence {
                        trial,
                        case_seed,
                        lambda,
                        class_id,
                        pipeline: p,
                        oracle: o,
                    });
                }
            }
        }
        if summary.divergence.is_some() {
            break;
        }
    }
    Ok(summary)
}
