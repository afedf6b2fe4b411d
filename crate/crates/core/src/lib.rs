//! Evaluation toolkit for panoptic-depth forecasting.
//!
//! Given predicted and ground-truth panoptic label maps and depth maps for
//! future frames, computes the depth-filtered panoptic quality PDC-Q, plain
//! PQ/SQ/RQ with a things/stuff breakdown, and Abs Rel / RMSE / δ accuracy.
//! A synthetic scene generator, brute-force reference metrics and two simple
//! forecasters make the whole pipeline runnable without a trained model.
//!
//! ```no_run
//! use pdcq::{frame_stats_all, finalize, PdcqConfig};
//! # fn demo(frame: pdcq::EvalFrame, classes: pdcq::ClassTable) -> pdcq::Result<()> {
//! let config = PdcqConfig::default();
//! let acc = frame_stats_all(&frame, &classes, &config)?;
//! let report = finalize(&acc, &classes, &config)?;
//! println!("PDC-Q@0.25 at t+{}: {:.2}", frame.delta, report.pdcq(0.25, frame.delta).unwrap());
//! # Ok(()) }
//! ```

pub mod baselines;
pub mod cli;
pub mod depth;
pub mod error;
pub mod ingest;
pub mod matching;
pub mod pdcq;
pub mod report;
pub mod synth;
pub mod types;

pub use depth::{abs_rel_map, depth_metrics, inlier_mask, DepthErrors, DepthMetrics};
pub use error::{Error, Result};
pub use matching::{extract_segments, iou, match_segments, MatchResult, SegmentRole, SegmentSet};
pub use pdcq::{
    apply_depth_filter, evaluate_frames, finalize, frame_stats, frame_stats_all, merge, PdcqReport,
    StatAccumulator,
};
pub use types::{
    validate, Aggregation, ClassInfo, ClassTable, DepthMap, EvalFrame, FilterMode, InlierBoundary,
    PanopticLabel, PanopticMap, PdcqConfig, Segment, ValidationReport,
};
