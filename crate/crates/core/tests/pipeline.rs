mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use pdcq::cli::{evaluate, write_baseline, BaselineName};
use pdcq::synth::{random_case, random_moving_scene, RandomSceneOptions};
use pdcq::{extract_segments, match_segments, ClassTable, PanopticMap, PdcqConfig, SegmentRole};

fn has_void_or_crowd(pan: &PanopticMap, classes: &ClassTable) -> bool {
    pan.labels()
        .iter()
        .any(|l| !classes.contains(l.class_id) || (classes.is_thing(l.class_id) && l.instance_id == 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_are_unique_and_counts_conserved(seed in any::<u64>()) {
        let case = random_case(40, seed);
        let classes = &case.classes;
        let pred = extract_segments(&case.pred_pan, classes, SegmentRole::Prediction);
        let gt = extract_segments(&case.gt_pan, classes, SegmentRole::GroundTruth);
        let result = match_segments(&pred, &gt, classes).unwrap();

        let mut pred_used = BTreeSet::new();
        let mut gt_used = BTreeSet::new();
        for (class_id, m) in &result.classes {
            for tp in &m.tp {
                prop_assert!(tp.iou > 0.5);
                prop_assert!(pred_used.insert(tp.pred.label()));
                prop_assert!(gt_used.insert(tp.gt.label()));
                prop_assert_eq!(tp.pred.class_id, *class_id);
            }
            let preds = pred.segments().iter().filter(|s| s.class_id == *class_id).count();
            let gts = gt.segments().iter().filter(|s| s.class_id == *class_id && !s.is_ignore).count();
            prop_assert_eq!(m.tp.len() + m.fp.len() + m.dropped.len(), preds);
            prop_assert_eq!(m.tp.len() + m.fn_.len(), gts);
        }
    }

    #[test]
    fn matching_is_symmetric_without_void(seed in any::<u64>()) {
        let case = random_case(40, seed);
        let classes = &case.classes;
        prop_assume!(!has_void_or_crowd(&case.gt_pan, classes));
        let a = extract_segments(&case.pred_pan, classes, SegmentRole::Prediction);
        let b = extract_segments(&case.gt_pan, classes, SegmentRole::GroundTruth);
        let forward = match_segments(&a, &b, classes).unwrap();
        let a2 = extract_segments(&case.gt_pan, classes, SegmentRole::Prediction);
        let b2 = extract_segments(&case.pred_pan, classes, SegmentRole::GroundTruth);
        let backward = match_segments(&a2, &b2, classes).unwrap();
        prop_assert_eq!(forward.tp_count(), backward.tp_count());
        prop_assert_eq!(forward.fp_count(), backward.fn_count());
        prop_assert_eq!(forward.fn_count(), backward.fp_count());
        for (class_id, m) in &forward.classes {
            let other = backward.class(*class_id).unwrap();
            prop_assert!((m.iou_sum() - other.iou_sum()).abs() < 1e-12);
        }
    }
}

/// With things in separate lanes that stay in frame, translating each
/// instance by its velocity never does worse than standing still.
#[test]
fn const_velocity_never_below_last_seen_on_lane_scenes() {
    for seed in 0..12 {
        let options = RandomSceneOptions {
            width: 96,
            height: 64,
            frame_count: 12,
            min_things: 2,
            max_things: 4,
            lanes: true,
            keep_in_frame: true,
            ..RandomSceneOptions::default()
        };
        let spec = random_moving_scene(&options, seed);
        let dir = tempfile::tempdir().unwrap();
        let manifest = common::dataset(dir.path(), &[("lanes".into(), spec)]);
        let config = PdcqConfig {
            deltas: manifest.eval.deltas.clone(),
            ..PdcqConfig::default()
        };
        let score = |name| {
            let preds = dir.path().join(format!("{name:?}"));
            write_baseline(name, &manifest, &preds, &config.deltas).unwrap();
            evaluate(&manifest, &preds, &config, "m", Some(1)).unwrap().report.unwrap()
        };
        let last = score(BaselineName::LastSeen);
        let cv = score(BaselineName::ConstVelocity);
        for h in &last.horizons {
            let c = cv.horizon(h.delta).unwrap();
            assert!(c.pdcq_avg >= h.pdcq_avg - 1e-9, "seed {seed} t+{}: {} < {}", h.delta, c.pdcq_avg, h.pdcq_avg);
            assert!(c.pq.all.pq >= h.pq.all.pq - 1e-9, "seed {seed} t+{}", h.delta);
        }
    }
}

#[test]
fn static_scene_baselines_agree() {
    let options = RandomSceneOptions {
        max_speed: 0,
        lanes: true,
        ..RandomSceneOptions::default()
    };
    let spec = random_moving_scene(&options, 3);
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::dataset(dir.path(), &[("static".into(), spec)]);
    let config = PdcqConfig {
        deltas: manifest.eval.deltas.clone(),
        ..PdcqConfig::default()
    };
    let reports: Vec<_> = [BaselineName::LastSeen, BaselineName::ConstVelocity]
        .into_iter()
        .map(|name| {
            let preds = dir.path().join(format!("{name:?}"));
            write_baseline(name, &manifest, &preds, &config.deltas).unwrap();
            evaluate(&manifest, &preds, &config, "m", Some(1)).unwrap().report.unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0].overall_avg, 100.0);
}
