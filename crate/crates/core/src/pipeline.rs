//! The end-to-end experiment: dataset synthesis, training, inference, evaluation,
//! quantization and benchmarking. Each stage reads and writes the on-disk formats, so the
//! command-line front end is a thin wrapper around these functions.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::camera::Intrinsics;
use crate::config::PipelineConfig;
use crate::decode::{decode_pose, lift_to_3d, DecodeConfig, Joint3D, Skeleton2D, Skeleton3D};
use crate::error::{Error, FormatError, Result};
use crate::map::Map;
use crate::metrics::{build_report, EvalReport, FramePoses};
use crate::networks::{
    build_depth2pose, build_pixels2depth, depth_examples, infer_depth_batch, infer_pose_maps_batch,
    load_model, pose_examples, quantize_weights, save_model, train, EpochLog, Kind, Model,
    StoredModel, TrainReport, MAP_SIZE,
};
use crate::scene::dataset::{generate_dataset, write_dataset, Dataset, Frame};
use crate::scene::NUM_JOINTS;
use crate::seed::{derive, Stream};
use crate::sensor::Histogram;

/// Frames per inference batch.
const BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSummary {
    pub frames: usize,
    pub seconds: f64,
}

impl SynthSummary {
    pub fn fps(&self) -> f64 {
        self.frames as f64 / self.seconds.max(1e-9)
    }
}

/// Generates `n_frames` frames (the first `cfg.data.validation_frames` of them form the
/// validation split) and writes them to `out`.
pub fn synth(
    cfg: &PipelineConfig,
    n_frames: usize,
    persons: usize,
    out: &Path,
) -> Result<SynthSummary> {
    let start = Instant::now();
    let n_val = cfg.data.validation_frames.min(n_frames);
    let ds = generate_dataset(
        n_frames,
        persons,
        n_val,
        &cfg.sensor_config(),
        &cfg.scene_config(),
        cfg.seed,
    )?;
    write_dataset(&ds, out)?;
    Ok(SynthSummary {
        frames: n_frames,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Depth,
    Pose,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(Stage::Depth),
            "pose" => Ok(Stage::Pose),
            _ => Err(Error::Config(format!(
                "unknown network {s:?}; expected depth or pose"
            ))),
        }
    }
}

fn split(ds: &Dataset) -> Result<(Vec<&Frame>, Vec<&Frame>)> {
    let tr: Vec<&Frame> = ds.training().collect();
    let va: Vec<&Frame> = ds.validation().collect();
    if tr.is_empty() || va.is_empty() {
        return Err(Error::Config(
            "dataset needs both training and validation frames".into(),
        ));
    }
    Ok((tr, va))
}

/// Trains Pixels2Depth, starting its output bias at the mean training depth.
pub fn train_depth(
    cfg: &PipelineConfig,
    ds: &Dataset,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model, TrainReport)> {
    let (tr, va) = split(ds)?;
    let mut model = build_pixels2depth(&ds.sensor, derive(cfg.seed, Stream::Init, 0))?;
    let mean = tr
        .iter()
        .map(|f| f.labels.depth32.data.iter().map(|&v| v as f64).sum::<f64>())
        .sum::<f64>()
        / (tr.len() * MAP_SIZE * MAP_SIZE) as f64;
    model.set_depth_bias(mean as f32)?;
    let tc = cfg.train_config(&cfg.depth_training, derive(cfg.seed, Stream::Shuffle, 0));
    let report = train(
        &mut model,
        &depth_examples(tr.iter().copied())?,
        &depth_examples(va.iter().copied())?,
        &tc,
        on_epoch,
    )?;
    Ok((model, report))
}

/// Depth maps predicted for `frames`, in order.
pub fn predict_depths(model: &Model, frames: &[&Frame]) -> Result<Vec<Map>> {
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(BATCH) {
        let hs: Vec<&Histogram> = chunk.iter().map(|f| &f.histogram).collect();
        out.extend(infer_depth_batch(model, &hs)?);
    }
    Ok(out)
}

/// Trains Depth2Pose. With a depth model its inputs are that model's predictions, so the
/// network learns on the depth it will see at inference; without one it uses the labels.
pub fn train_pose(
    cfg: &PipelineConfig,
    ds: &Dataset,
    depth_model: Option<&Model>,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model, TrainReport)> {
    let (tr, va) = split(ds)?;
    let range = match depth_model {
        Some(m) if m.spec.kind != Kind::Pixels2Depth => {
            return Err(Error::Config(format!(
                "{} is not a depth model",
                m.spec.id()
            )))
        }
        Some(m) => m.spec.depth_range,
        None => ds.sensor.crop_range() as f32,
    };
    let inputs = |frames: &[&Frame]| -> Result<Vec<Map>> {
        match depth_model {
            Some(m) => predict_depths(m, frames),
            None => Ok(frames.iter().map(|f| f.labels.depth32.clone()).collect()),
        }
    };
    let (dtr, dva) = (inputs(&tr)?, inputs(&va)?);
    let examples = |d: &[Map], f: &[&Frame]| {
        let maps: Vec<&Map> = d.iter().collect();
        let labels: Vec<_> = f.iter().map(|f| &f.labels).collect();
        pose_examples(&maps, &labels, range)
    };
    let mut model = build_depth2pose(range, derive(cfg.seed, Stream::Init, 1))?;
    let tc = cfg.train_config(&cfg.pose_training, derive(cfg.seed, Stream::Shuffle, 1));
    let report = train(
        &mut model,
        &examples(&dtr, &tr)?,
        &examples(&dva, &va)?,
        &tc,
        on_epoch,
    )?;
    Ok((model, report))
}

/// Loads a model file of either precision as a float network of the expected kind.
pub fn load_network(path: &Path, kind: Kind) -> Result<Model> {
    let model = load_model(path)?.into_model()?;
    if model.spec.kind != kind {
        return Err(Error::Config(format!(
            "{} holds {}, expected a {:?} network",
            path.display(),
            model.spec.id(),
            kind
        )));
    }
    Ok(model)
}

/// Per-frame result of the three stages.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame_id: u32,
    pub depth: Map,
    pub skeletons2d: Vec<Skeleton2D>,
    pub skeletons3d: Vec<Skeleton3D>,
}

/// Seconds spent in each stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimes {
    pub depth: f64,
    pub pose: f64,
    pub post: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.depth + self.pose + self.post
    }
}

/// Both networks plus decoding: histogram in, 3D skeletons out.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub depth: Model,
    pub pose: Model,
    pub intrinsics: Intrinsics,
    pub decode: DecodeConfig,
}

impl Pipeline {
    pub fn new(
        depth: Model,
        pose: Model,
        fov_diagonal_deg: f64,
        decode: DecodeConfig,
    ) -> Result<Self> {
        if depth.spec.kind != Kind::Pixels2Depth || pose.spec.kind != Kind::Depth2Pose {
            return Err(Error::Config(
                "expected a depth model and a pose model".into(),
            ));
        }
        Ok(Pipeline {
            depth,
            pose,
            intrinsics: Intrinsics::from_diagonal_fov(MAP_SIZE, MAP_SIZE, fov_diagonal_deg)?,
            decode,
        })
    }

    pub fn load(cfg: &PipelineConfig, depth: &Path, pose: &Path) -> Result<Self> {
        Pipeline::new(
            load_network(depth, Kind::Pixels2Depth)?,
            load_network(pose, Kind::Depth2Pose)?,
            cfg.sensor.fov_diagonal_deg,
            cfg.decode_config(),
        )
    }

    /// Runs a batch of frames, adding the time of each stage to `times`.
    pub fn run_batch(
        &self,
        ids: &[u32],
        hs: &[&Histogram],
        times: &mut StageTimes,
    ) -> Result<Vec<FrameOutput>> {
        let t = Instant::now();
        let depths = infer_depth_batch(&self.depth, hs)?;
        times.depth += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let maps = infer_pose_maps_batch(&self.pose, &depths.iter().collect::<Vec<_>>())?;
        times.pose += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let out = ids
            .iter()
            .zip(depths)
            .zip(maps)
            .map(|((&frame_id, depth), m)| {
                let skeletons2d = decode_pose(&m.heatmaps, &m.pafs, m.resolution, &self.decode);
                let skeletons3d = skeletons2d
                    .iter()
                    .map(|s| lift_to_3d(s, &depth, &self.intrinsics))
                    .collect();
                FrameOutput {
                    frame_id,
                    depth,
                    skeletons2d,
                    skeletons3d,
                }
            })
            .collect();
        times.post += t.elapsed().as_secs_f64();
        Ok(out)
    }

    pub fn run_frames(
        &self,
        frames: &[&Frame],
        times: &mut StageTimes,
    ) -> Result<Vec<FrameOutput>> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(BATCH) {
            let ids: Vec<u32> = chunk.iter().map(|f| f.frame_id).collect();
            let hs: Vec<&Histogram> = chunk.iter().map(|f| &f.histogram).collect();
            out.extend(self.run_batch(&ids, &hs, times)?);
        }
        Ok(out)
    }
}

/// Which frames of a dataset a command processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Training,
    Validation,
    All,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(Split::Training),
            "validation" => Ok(Split::Validation),
            "all" => Ok(Split::All),
            _ => Err(Error::Config(format!(
                "unknown split {s:?}; expected training, validation or all"
            ))),
        }
    }
}

pub fn select(ds: &Dataset, split: Split) -> Vec<&Frame> {
    ds.frames
        .iter()
        .filter(|f| match split {
            Split::Training => !f.validation,
            Split::Validation => f.validation,
            Split::All => true,
        })
        .collect()
}

/// Runs the pipeline over `frames` and returns the predictions with the stage timings.
pub fn infer(pipeline: &Pipeline, frames: &[&Frame]) -> Result<(Vec<FramePoses>, StageTimes)> {
    let mut times = StageTimes::default();
    let out = pipeline.run_frames(frames, &mut times)?;
    let poses = out
        .into_iter()
        .map(|o| FramePoses {
            frame_id: o.frame_id,
            persons: o.skeletons3d,
        })
        .collect();
    Ok((poses, times))
}

/// Ground-truth skeletons of a frame; joints hidden in the labels are marked invalid.
pub fn truth_poses(frame: &Frame) -> FramePoses {
    let persons = frame
        .labels
        .joints3d
        .iter()
        .zip(&frame.labels.joints2d)
        .map(|(j3, j2)| {
            let mut s = Skeleton3D::from_positions(j3);
            for (j, v) in s.joints.iter_mut().zip(j2) {
                j.valid = v.visible;
            }
            s
        })
        .collect();
    FramePoses {
        frame_id: frame.frame_id,
        persons,
    }
}

/// One JSON object per line: frame id and, per person, 14 joints as `[valid, x, y, z]`
/// with coordinates in metres to six significant digits.
pub fn predictions_to_jsonl(frames: &[FramePoses]) -> String {
    let mut s = String::new();
    for f in frames {
        let _ = write!(s, "{{\"frame\":{},\"persons\":[", f.frame_id);
        for (p, person) in f.persons.iter().enumerate() {
            if p > 0 {
                s.push(',');
            }
            s.push('[');
            for (j, joint) in person.joints.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                let _ = write!(
                    s,
                    "[{},{:.5e},{:.5e},{:.5e}]",
                    joint.valid, joint.x, joint.y, joint.z
                );
            }
            s.push(']');
        }
        s.push_str("]}\n");
    }
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: u32,
    persons: Vec<Vec<(bool, f32, f32, f32)>>,
}

pub fn predictions_from_jsonl(text: &str) -> Result<Vec<FramePoses>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| {
            Error::Format(FormatError::Malformed(format!(
                "prediction line {}: {e}",
                i + 1
            )))
        })?;
        let mut persons = Vec::with_capacity(rec.persons.len());
        for joints in rec.persons {
            if joints.len() != NUM_JOINTS {
                return Err(Error::Format(FormatError::Malformed(format!(
                    "prediction line {}: person with {} joints",
                    i + 1,
                    joints.len()
                ))));
            }
            let mut s = Skeleton3D::default();
            for (dst, (valid, x, y, z)) in s.joints.iter_mut().zip(joints) {
                *dst = Joint3D { x, y, z, valid };
            }
            persons.push(s);
        }
        out.push(FramePoses {
            frame_id: rec.frame,
            persons,
        });
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::file(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<FramePoses>> {
    let file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| Error::file(path, e))?);
        text.push('\n');
    }
    predictions_from_jsonl(&text)
}

/// Evaluates predictions against the ground truth of the frames with the same ids.
pub fn evaluate(predicted: &[FramePoses], ds: &Dataset) -> Result<EvalReport> {
    let by_id: std::collections::HashMap<u32, &Frame> =
        ds.frames.iter().map(|f| (f.frame_id, f)).collect();
    let truth = predicted
        .iter()
        .map(|p| {
            by_id
                .get(&p.frame_id)
                .map(|f| truth_poses(f))
                .ok_or_else(|| {
                    Error::Alignment(format!("frame {} is not in the dataset", p.frame_id))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    build_report(predicted, &truth)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizeSummary {
    pub float_bytes: u64,
    pub quantized_bytes: u64,
}

impl QuantizeSummary {
    pub fn ratio(&self) -> f64 {
        self.quantized_bytes as f64 / self.float_bytes as f64
    }
}

pub fn quantize_file(input: &Path, output: &Path) -> Result<QuantizeSummary> {
    let model = match load_model(input)? {
        StoredModel::Float(m) => m,
        StoredModel::Quantized(_) => {
            return Err(Error::Domain(format!(
                "{} is already quantized",
                input.display()
            )))
        }
    };
    save_model(&StoredModel::Quantized(quantize_weights(&model)), output)?;
    let size = |p: &Path| {
        fs::metadata(p)
            .map(|m| m.len())
            .map_err(|e| Error::file(p, e))
    };
    Ok(QuantizeSummary {
        float_bytes: size(input)?,
        quantized_bytes: size(output)?,
    })
}

/// Median and 95th percentile of per-frame stage times, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageStats {
    pub median: f64,
    pub p95: f64,
}

fn stats(mut v: Vec<f64>) -> StageStats {
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    StageStats {
        median: at(0.5),
        p95: at(0.95),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub frames: usize,
    pub depth: StageStats,
    pub pose: StageStats,
    pub post: StageStats,
    /// Single-stream frames per second of each repeat, from the sum of stage medians.
    pub repeat_fps: Vec<f64>,
    pub threads: usize,
    /// Frames per second with frames spread over `threads` workers.
    pub parallel_fps: f64,
}

impl BenchReport {
    /// `1 / (sum of stage medians)` of the first repeat.
    pub fn fps(&self) -> f64 {
        1.0 / (self.depth.median + self.pose.median + self.post.median)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} frames, single stream", self.frames);
        for (name, st) in [
            ("Pixels2Depth", self.depth),
            ("Depth2Pose", self.pose),
            ("post-processing", self.post),
        ] {
            let _ = writeln!(
                s,
                "{name:<16} median {:.4} s  p95 {:.4} s",
                st.median, st.p95
            );
        }
        let n = self.repeat_fps.len() as f64;
        let mean = self.repeat_fps.iter().sum::<f64>() / n;
        let sd = (self
            .repeat_fps
            .iter()
            .map(|f| (f - mean).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let _ = writeln!(
            s,
            "total {:.4} s per frame, {:.1} fps (repeats: mean {mean:.1} fps, std {sd:.2} fps over {})",
            1.0 / self.fps(),
            self.fps(),
            self.repeat_fps.len()
        );
        let _ = writeln!(s, "{} threads: {:.1} fps", self.threads, self.parallel_fps);
        s
    }
}

/// Times the three stages one frame at a time over at least `min_frames` frames (cycling
/// through `frames`), `repeats` times, then measures throughput with `threads` workers.
pub fn bench(
    pipeline: &Pipeline,
    frames: &[&Frame],
    min_frames: usize,
    repeats: usize,
    threads: usize,
) -> Result<BenchReport> {
    if frames.is_empty() || repeats == 0 {
        return Err(Error::Config(
            "bench needs frames and at least one repeat".into(),
        ));
    }
    let n = min_frames.max(frames.len());
    let mut first = None;
    let mut repeat_fps = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let (mut d, mut p, mut q) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..n {
            let f = frames[i % frames.len()];
            let mut t = StageTimes::default();
            pipeline.run_batch(&[f.frame_id], &[&f.histogram], &mut t)?;
            d.push(t.depth);
            p.push(t.pose);
            q.push(t.post);
        }
        let (d, p, q) = (stats(d), stats(p), stats(q));
        repeat_fps.push(1.0 / (d.median + p.median + q.median));
        first.get_or_insert((d, p, q));
    }
    let threads = threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    pool.install(|| {
        (0..n).into_par_iter().try_for_each(|i| {
            let f = frames[i % frames.len()];
            pipeline
                .run_batch(&[f.frame_id], &[&f.histogram], &mut StageTimes::default())
                .map(|_| ())
        })
    })?;
    let parallel_fps = n as f64 / start.elapsed().as_secs_f64();
    let (depth, pose, post) = first.expect("at least one repeat");
    Ok(BenchReport {
        frames: n,
        depth,
        pose,
        post,
        repeat_fps,
        threads,
        parallel_fps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_records_round_trip() {
        let mut s = Skeleton3D::default();
        s.joints[1] = Joint3D {
            x: 0.123456,
            y: -1.5,
            z: 2.25,
            valid: true,
        };
        let frames = vec![
            FramePoses {
                frame_id: 4,
                persons: vec![s.clone(), Skeleton3D::default()],
            },
            FramePoses {
                frame_id: 5,
                persons: vec![],
            },
        ];
        let text = predictions_to_jsonl(&frames);
        assert!(text.contains("[true,1.23456e-1,-1.50000e0,2.25000e0]"));
        let back = predictions_from_jsonl(&text).unwrap();
        assert_eq!(back, frames);
        assert_eq!(predictions_to_jsonl(&back), text);
    }

    #[test]
    fn malformed_records_are_format_errors() {
        assert!(matches!(
            predictions_from_jsonl("{\"frame\":1}"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            predictions_from_jsonl("{\"frame\":1,\"persons\":[[[true,0,0,0]]]}"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn stats_of_a_ramp() {
        let s = stats((1..=100).map(|v| v as f64).collect());
        assert_eq!(s.median, 51.0);
        assert_eq!(s.p95, 95.0);
    }
}
