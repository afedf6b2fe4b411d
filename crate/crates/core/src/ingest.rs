//! On-disk formats and the dataset manifest.
//!
//! Both image kinds are 16-bit single-channel PNGs:
//!
//! * panoptic: `value = class_id * 1000 + instance_id`, `65535` is void;
//! * depth: `meters = value / 256`, `0` is invalid.
//!
//! Predictions live under a root directory as
//! `{sequence_id}/{t}/{delta}_pan.png` and `{sequence_id}/{t}/{delta}_depth.png`.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    ClassTable, DepthMap, EvalFrame, PanopticLabel, PanopticMap, PdcqConfig, MAX_INSTANCE_ID,
};

pub const VOID_VALUE: u16 = u16::MAX;
pub const DEPTH_SCALE: f64 = 256.0;

fn read_gray16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|source| Error::PngDecode {
        path: path.into(),
        source,
    })?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::WrongChannelCount {
            path: path.into(),
            found: format!("{:?}", info.color_type),
        });
    }
    if info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::WrongBitDepth {
            path: path.into(),
            found: info.bit_depth as u8,
        });
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; width * height * 2];
    reader.next_frame(&mut buf).map_err(|source| Error::PngDecode {
        path: path.into(),
        source,
    })?;
    let values = buf
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok((width, height, values))
}

fn write_gray16(path: &Path, width: usize, height: usize, values: &[u16]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    encoder.set_compression(png::Compression::Fast);
    let encode_err = |source| Error::PngEncode {
        path: path.into(),
        source,
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    writer.write_image_data(&bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// Decodes a raw panoptic value. `65535` maps to the table's void label.
pub fn decode_panoptic_value(value: u16, void: PanopticLabel) -> PanopticLabel {
    if value == VOID_VALUE {
        void
    } else {
        PanopticLabel::new(value / 1000, value % 1000)
    }
}

pub fn encode_panoptic_value(label: PanopticLabel, void_class_id: u16) -> Option<u16> {
    if label.class_id == void_class_id {
        return Some(VOID_VALUE);
    }
    if label.instance_id >= MAX_INSTANCE_ID {
        return None;
    }
    let value = u32::from(label.class_id) * 1000 + u32::from(label.instance_id);
    (value < u32::from(VOID_VALUE)).then_some(value as u16)
}

pub fn read_panoptic(path: impl AsRef<Path>, classes: &ClassTable) -> Result<PanopticMap> {
    let (width, height, values) = read_gray16(path.as_ref())?;
    let void = classes.void_label();
    let labels = values
        .into_iter()
        .map(|v| decode_panoptic_value(v, void))
        .collect();
    PanopticMap::new(width, height, labels)
}

pub fn write_panoptic(map: &PanopticMap, path: impl AsRef<Path>, classes: &ClassTable) -> Result<()> {
    let width = map.width().max(1);
    let values = map
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            encode_panoptic_value(label, classes.void_class_id()).ok_or(Error::Unencodable {
                x: i % width,
                y: i / width,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_gray16(path.as_ref(), map.width(), map.height(), &values)
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let (width, height, values) = read_gray16(path.as_ref())?;
    let depth = values
        .into_iter()
        .map(|v| f64::from(v) / DEPTH_SCALE)
        .collect();
    DepthMap::new(width, height, depth)
}

/// Quantizes to 1/256 m. Depths below 1/512 m round to the invalid marker.
pub fn write_depth(map: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let width = map.width().max(1);
    let limit = f64::from(u16::MAX) / DEPTH_SCALE;
    let values = map
        .values()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if !(d >= 0.0 && d < limit) {
                return Err(Error::DepthOutOfRange {
                    x: i % width,
                    y: i / width,
                    value: d,
                });
            }
            Ok((d * DEPTH_SCALE).round() as u16)
        })
        .collect::<Result<Vec<_>>>()?;
    write_gray16(path.as_ref(), map.width(), map.height(), &values)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSpec {
    /// Number of past frames observed before the current frame `t`.
    pub observed_window: u32,
    pub deltas: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: i64,
    pub panoptic: PathBuf,
    pub depth: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub frames: Vec<FrameRecord>,
}

/// Ground-truth dataset description. Relative paths resolve against the
/// directory holding the manifest file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_name: String,
    pub class_table: ClassTable,
    pub eval: EvalSpec,
    pub sequences: Vec<SequenceRecord>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.root.join(path)
    }

    /// Checks structure only: ordering and uniqueness.
    pub fn check_structure(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for seq in &self.sequences {
            if !ids.insert(seq.id.as_str()) {
                return Err(Error::Manifest(format!("sequence {} listed twice", seq.id)));
            }
            if seq.frames.windows(2).any(|w| w[0].index >= w[1].index) {
                return Err(Error::Manifest(format!(
                    "frame indices of sequence {} are not strictly increasing",
                    seq.id
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Loads a manifest and checks that every referenced file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    manifest.root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    manifest.check_structure()?;
    for seq in &manifest.sequences {
        for frame in &seq.frames {
            for p in [&frame.panoptic, &frame.depth] {
                let resolved = manifest.resolve(p);
                if !resolved.is_file() {
                    return Err(Error::Manifest(format!(
                        "sequence {} frame {}: {} does not exist",
                        seq.id,
                        frame.index,
                        resolved.display()
                    )));
                }
            }
        }
    }
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionLayout {
    pub root: PathBuf,
}

impl PredictionLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dir(&self, sequence_id: &str, t: i64) -> PathBuf {
        self.root.join(sequence_id).join(t.to_string())
    }

    pub fn panoptic_path(&self, sequence_id: &str, t: i64, delta: u32) -> PathBuf {
        self.dir(sequence_id, t).join(format!("{delta}_pan.png"))
    }

    pub fn depth_path(&self, sequence_id: &str, t: i64, delta: u32) -> PathBuf {
        self.dir(sequence_id, t).join(format!("{delta}_depth.png"))
    }

    pub fn write(
        &self,
        sequence_id: &str,
        t: i64,
        delta: u32,
        pan: &PanopticMap,
        depth: &DepthMap,
        classes: &ClassTable,
    ) -> Result<()> {
        let dir = self.dir(sequence_id, t);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_panoptic(pan, self.panoptic_path(sequence_id, t, delta), classes)?;
        write_depth(depth, self.depth_path(sequence_id, t, delta))
    }
}

/// An expected forecast with no prediction pair on disk.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct MissingPrediction {
    pub sequence_id: String,
    pub t: i64,
    pub delta: u32,
}

/// Paths for one forecast to score; loaded on demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameTask {
    pub sequence_id: String,
    pub t: i64,
    pub delta: u32,
    pub gt_pan: PathBuf,
    pub gt_depth: PathBuf,
    pub pred_pan: PathBuf,
    pub pred_depth: PathBuf,
}

impl FrameTask {
    pub fn load(&self, classes: &ClassTable) -> Result<EvalFrame> {
        let frame = EvalFrame {
            sequence_id: self.sequence_id.clone(),
            t: self.t,
            delta: self.delta,
            pred_pan: read_panoptic(&self.pred_pan, classes)?,
            pred_depth: read_depth(&self.pred_depth)?,
            gt_pan: read_panoptic(&self.gt_pan, classes)?,
            gt_depth: read_depth(&self.gt_depth)?,
        };
        frame.check_dims()?;
        Ok(frame)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalPlan {
    pub tasks: Vec<FrameTask>,
    pub missing: Vec<MissingPrediction>,
}

impl EvalPlan {
    pub fn expected(&self) -> usize {
        self.tasks.len() + self.missing.len()
    }
}

/// Every `(sequence, t, delta)` the manifest supports: `t` has at least
/// `observed_window` earlier frames in its sequence and frame `t + delta`
/// exists in the ground truth.
pub fn forecast_targets<'a>(
    manifest: &'a Manifest,
    deltas: &[u32],
) -> Vec<(&'a SequenceRecord, usize, u32, &'a FrameRecord)> {
    let window = manifest.eval.observed_window as usize;
    let mut sequences: Vec<&SequenceRecord> = manifest.sequences.iter().collect();
    sequences.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = Vec::new();
    for seq in sequences {
        let by_index: BTreeMap<i64, &FrameRecord> =
            seq.frames.iter().map(|f| (f.index, f)).collect();
        for (pos, frame) in seq.frames.iter().enumerate().skip(window) {
            for &delta in deltas {
                if let Some(target) = by_index.get(&(frame.index + i64::from(delta))) {
                    out.push((seq, pos, delta, *target));
                }
            }
        }
    }
    out
}

/// Pairs predictions with ground truth without reading any image.
pub fn plan_eval_frames(
    manifest: &Manifest,
    preds: &PredictionLayout,
    config: &PdcqConfig,
) -> EvalPlan {
    let mut plan = EvalPlan::default();
    for (seq, pos, delta, target) in forecast_targets(manifest, &config.deltas) {
        let t = seq.frames[pos].index;
        let pred_pan = preds.panoptic_path(&seq.id, t, delta);
        let pred_depth = preds.depth_path(&seq.id, t, delta);
        if pred_pan.is_file() && pred_depth.is_file() {
            plan.tasks.push(FrameTask {
                sequence_id: seq.id.clone(),
                t,
                delta,
                gt_pan: manifest.resolve(&target.panoptic),
                gt_depth: manifest.resolve(&target.depth),
                pred_pan,
                pred_depth,
            });
        } else {
            plan.missing.push(MissingPrediction {
                sequence_id: seq.id.clone(),
                t,
                delta,
            });
        }
    }
    plan
}

/// Loads every resolvable forecast; frames come back sorted by
/// `(sequence, t, delta)` alongside the list of missing predictions.
pub fn resolve_eval_frames(
    manifest: &Manifest,
    preds: &PredictionLayout,
    config: &PdcqConfig,
) -> Result<(Vec<EvalFrame>, Vec<MissingPrediction>)> {
    let plan = plan_eval_frames(manifest, preds, config);
    let frames = plan
        .tasks
        .par_iter()
        .map(|task| task.load(&manifest.class_table))
        .collect::<Result<Vec<_>>>()?;
    Ok((frames, plan.missing))
}

/// Writes one ground-truth sequence as `{dir}/{index:06}_pan.png` and
/// `{dir}/{index:06}_depth.png`, returning manifest records relative to `root`.
pub fn write_sequence(
    root: &Path,
    rel_dir: &Path,
    frames: &[(PanopticMap, DepthMap)],
    first_index: i64,
    classes: &ClassTable,
) -> Result<Vec<FrameRecord>> {
    let dir = root.join(rel_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, (pan, depth))| {
            let index = first_index + i as i64;
            let panoptic = rel_dir.join(format!("{index:06}_pan.png"));
            let depth_rel = rel_dir.join(format!("{index:06}_depth.png"));
            write_panoptic(pan, root.join(&panoptic), classes)?;
            write_depth(depth, root.join(&depth_rel))?;
            Ok(FrameRecord {
                index,
                panoptic,
                depth: depth_rel,
            })
        })
        .collect()
}
