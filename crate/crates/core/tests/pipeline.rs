use std::path::Path;

use pixels2pose::config::PipelineConfig;
use pixels2pose::networks::{save_model, Kind, StoredModel};
use pixels2pose::pipeline::*;
use pixels2pose::scene::dataset::read_dataset;

fn tiny_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed: 21,
        ..PipelineConfig::default()
    };
    cfg.data.validation_frames = 6;
    cfg.depth_training.epochs = 2;
    cfg.pose_training.epochs = 2;
    cfg
}

/// Synthesizes, trains both networks, infers on the validation split and evaluates,
/// returning every artifact as bytes.
fn run_all(cfg: &PipelineConfig, dir: &Path) -> Vec<Vec<u8>> {
    let data = dir.join("data.p2pd");
    synth(cfg, 30, 1, &data).unwrap();
    let ds = read_dataset(&data).unwrap();
    let (depth, dr) = train_depth(cfg, &ds, |_| {}).unwrap();
    let (pose, pr) = train_pose(cfg, &ds, Some(&depth), |_| {}).unwrap();
    let (dm, pm) = (dir.join("depth.p2pw"), dir.join("pose.p2pw"));
    save_model(&StoredModel::Float(depth), &dm).unwrap();
    save_model(&StoredModel::Float(pose), &pm).unwrap();
    let pipe = Pipeline::load(cfg, &dm, &pm).unwrap();
    let (pred, _) = infer(&pipe, &select(&ds, Split::Validation)).unwrap();
    let jsonl = predictions_to_jsonl(&pred);
    let report = evaluate(&pred, &ds).unwrap();
    vec![
        std::fs::read(&data).unwrap(),
        std::fs::read(&dm).unwrap(),
        std::fs::read(&pm).unwrap(),
        dr.log_text().into_bytes(),
        pr.log_text().into_bytes(),
        jsonl.into_bytes(),
        report.to_table().into_bytes(),
        report.to_json_lines().into_bytes(),
    ]
}

#[test]
fn end_to_end_runs_are_byte_identical() {
    let cfg = tiny_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_all(&cfg, a.path());
    let second = run_all(&cfg, b.path());
    assert_eq!(first, second);
    let mut other = cfg.clone();
    other.seed += 1;
    let c = tempfile::tempdir().unwrap();
    assert_ne!(run_all(&other, c.path())[0], first[0]);
}

#[test]
fn predictions_survive_the_text_format() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.p2pd");
    synth(&cfg, 8, 2, &data).unwrap();
    let ds = read_dataset(&data).unwrap();
    let truth: Vec<_> = ds.frames.iter().map(truth_poses).collect();
    let text = predictions_to_jsonl(&truth);
    assert_eq!(text.lines().count(), 8);
    let back = predictions_from_jsonl(&text).unwrap();
    assert_eq!(predictions_to_jsonl(&back), text);
    let report = evaluate(&back, &ds).unwrap();
    for row in &report.rows {
        assert!(row.ae_cm < 1e-3, "{:?}", row);
    }
}

#[test]
fn bad_prediction_text_is_a_format_error() {
    for text in [
        "{",
        "{\"frame\":1}",
        "{\"frame\":1,\"persons\":[[[1,0,0]]]}",
    ] {
        assert!(predictions_from_jsonl(text).is_err(), "{text}");
    }
}

#[test]
fn predictions_for_unknown_frames_are_rejected() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.p2pd");
    synth(&cfg, 8, 1, &data).unwrap();
    let ds = read_dataset(&data).unwrap();
    let mut poses = vec![truth_poses(&ds.frames[0])];
    poses[0].frame_id = 999;
    assert!(evaluate(&poses, &ds).is_err());
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let cfg = tiny_config();
    assert_eq!(PipelineConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    assert_eq!(
        PipelineConfig::parse(&PipelineConfig::reference()).unwrap(),
        PipelineConfig::default()
    );
    assert!(PipelineConfig::parse("[sensor]\nbogus = 1\n").is_err());
    assert!(PipelineConfig::parse("seed = \"x\"").is_err());
}

#[test]
fn quantize_rejects_quantized_input_and_wrong_kinds_fail_to_load() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.p2pd");
    synth(&cfg, 12, 1, &data).unwrap();
    let ds = read_dataset(&data).unwrap();
    let mut c = cfg.clone();
    c.depth_training.epochs = 1;
    let (depth, _) = train_depth(&c, &ds, |_| {}).unwrap();
    let f = dir.path().join("depth.p2pw");
    let q = dir.path().join("depth.q8.p2pw");
    save_model(&StoredModel::Float(depth), &f).unwrap();
    let s = quantize_file(&f, &q).unwrap();
    assert!(s.ratio() <= 0.30, "{}", s.ratio());
    assert!(quantize_file(&q, &dir.path().join("again.p2pw")).is_err());
    assert!(load_network(&q, Kind::Pixels2Depth).is_ok());
    assert!(load_network(&q, Kind::Depth2Pose).is_err());
}

#[test]
fn bench_reports_three_stages() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.p2pd");
    synth(&cfg, 4, 1, &data).unwrap();
    let ds = read_dataset(&data).unwrap();
    let depth = pixels2pose::networks::build_pixels2depth(&ds.sensor, 1).unwrap();
    let pose = pixels2pose::networks::build_depth2pose(depth.spec.depth_range, 2).unwrap();
    let pipe = Pipeline::new(
        depth,
        pose,
        cfg.sensor.fov_diagonal_deg,
        cfg.decode_config(),
    )
    .unwrap();
    let frames = select(&ds, Split::All);
    let r = bench(&pipe, &frames, 6, 2, 1).unwrap();
    assert_eq!(r.frames, 6);
    assert_eq!(r.repeat_fps.len(), 2);
    assert!(r.fps() > 0.0 && r.parallel_fps > 0.0);
    let text = r.to_text();
    for stage in ["Pixels2Depth", "Depth2Pose", "post-processing"] {
        assert!(text.contains(stage), "{text}");
    }
}
