use pixels2pose::networks::*;
use pixels2pose::nn::Tensor;
use pixels2pose::scene::dataset::{generate_dataset, Frame};
use pixels2pose::scene::SceneConfig;
use pixels2pose::sensor::{Histogram, SensorConfig};

fn sensor() -> SensorConfig {
    SensorConfig {
        bin_duration_ps: 200.0,
        signal_photons: 2000.0,
        ..SensorConfig::default()
    }
}

fn frames(n: usize, seed: u64) -> Vec<Frame> {
    generate_dataset(n, 1, 0, &sensor(), &SceneConfig::default(), seed)
        .unwrap()
        .frames
}

#[test]
fn parameter_counts_are_within_budget() {
    let d = build_pixels2depth(&sensor(), 0).unwrap();
    let p = build_depth2pose(3.0, 0).unwrap();
    println!(
        "Pixels2Depth: {} parameters (reference 368,929)",
        d.parameter_count()
    );
    println!(
        "Depth2Pose: {} parameters (reference 2,517,768)",
        p.parameter_count()
    );
    assert!((250_000..=500_000).contains(&d.parameter_count()));
    assert!((1_500_000..=3_000_000).contains(&p.parameter_count()));
}

#[test]
fn output_shapes_and_zero_input() {
    let s = sensor();
    let d = build_pixels2depth(&s, 1).unwrap();
    let zero = Histogram::zeros(s.grid_x, s.grid_y, s.n_bins_crop);
    let depth = infer_depth(&d, &zero).unwrap();
    assert_eq!((depth.width, depth.height), (32, 32));
    assert!(depth
        .data
        .iter()
        .all(|v| v.is_finite() && (0.0..=d.spec.depth_range).contains(v)));
    let p = build_depth2pose(d.spec.depth_range, 2).unwrap();
    let maps = infer_pose_maps(&p, &depth).unwrap();
    assert_eq!(maps.heatmaps.len(), 14 * 1024);
    assert_eq!(maps.pafs.len(), 26 * 1024);
    let outs = p.forward(Tensor::zeros(&[3, 1, 32, 32])).unwrap();
    assert_eq!(outs.len(), 2 * (REFINEMENT_STAGES + 1));
    assert_eq!(outs[0].shape(), &[3, 14, 32, 32]);
    assert_eq!(outs[1].shape(), &[3, 26, 32, 32]);
}

#[test]
fn wrong_input_sizes_are_rejected() {
    let s = sensor();
    let d = build_pixels2depth(&s, 1).unwrap();
    assert!(infer_depth(&d, &Histogram::zeros(s.grid_x, s.grid_y, s.n_bins_crop + 1)).is_err());
    let p = build_depth2pose(3.0, 1).unwrap();
    assert!(infer_pose_maps(&p, &pixels2pose::map::Map::filled(16, 16, 1.0)).is_err());
    assert!(
        infer_depth_batch(&p, &[&Histogram::zeros(s.grid_x, s.grid_y, s.n_bins_crop)]).is_err()
    );
}

#[test]
fn depth_training_overfits_one_frame() {
    let f = frames(1, 3);
    let ex = depth_examples(std::iter::repeat_n(&f[0], 4)).unwrap();
    let mut m = build_pixels2depth(&sensor(), 4).unwrap();
    let mean = f[0].labels.depth32.data.iter().sum::<f32>() / 1024.0;
    m.set_depth_bias(mean).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 1,
        seed: 1,
        ..TrainConfig::default()
    };
    let report = train(&mut m, &ex, &ex, &cfg, |_| {}).unwrap();
    let last = report.log.last().unwrap();
    assert!(last.train_loss < 1e-3, "{}", report.log_text());
}

#[test]
fn pose_training_overfits_twenty_frames() {
    let f = frames(20, 5);
    let depths: Vec<_> = f.iter().map(|f| &f.labels.depth32).collect();
    let labels: Vec<_> = f.iter().map(|f| &f.labels).collect();
    let range = sensor().crop_range() as f32;
    let ex = pose_examples(&depths, &labels, range).unwrap();
    let mut m = build_depth2pose(range, 6).unwrap();
    let cfg = TrainConfig {
        epochs: 120,
        batch_size: 1,
        seed: 2,
        ..TrainConfig::default()
    };
    let report = train(&mut m, &ex, &ex, &cfg, |_| {}).unwrap();
    let maps = infer_pose_maps_batch(&m, &depths).unwrap();
    let (mut ok, mut total) = (0, 0);
    for (map, frame) in maps.iter().zip(&f) {
        for j in 0..14 {
            let g = frame.labels.joints2d[0][j];
            if !g.visible {
                continue;
            }
            let h = map.heatmap(j);
            let best = (0..h.len()).max_by(|&a, &b| h[a].total_cmp(&h[b])).unwrap();
            let (u, v) = ((best % 32) as f32, (best / 32) as f32);
            total += 1;
            if (u - g.u).hypot(v - g.v) <= 1.0 {
                ok += 1;
            }
        }
    }
    assert!(
        ok * 100 >= total * 95,
        "{ok}/{total}\n{}",
        report.log_text()
    );
}

#[test]
fn training_is_deterministic_and_keeps_the_best_epoch() {
    let f = frames(60, 8);
    let (tr, va) = f.split_at(50);
    let run = || {
        let mut m = build_pixels2depth(&sensor(), 9).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 3,
            ..TrainConfig::default()
        };
        let r = train(
            &mut m,
            &depth_examples(tr.iter()).unwrap(),
            &depth_examples(va.iter()).unwrap(),
            &cfg,
            |_| {},
        )
        .unwrap();
        (r, m)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a.log_text(), b.log_text());
    assert_eq!(ma.params, mb.params);
    let best = a.log[a.best_epoch].val_loss;
    assert!(a.log.iter().all(|e| best <= e.val_loss));
    assert!(best < a.log[0].val_loss);
    let cfg = TrainConfig::default();
    let v = evaluate_loss(&ma, &depth_examples(va.iter()).unwrap(), &cfg).unwrap();
    assert!((v - best).abs() <= 1e-6 * best.max(1.0));
}

#[test]
fn training_rejects_bad_inputs() {
    let f = frames(4, 1);
    let ex = depth_examples(f.iter()).unwrap();
    let mut pose = build_depth2pose(3.0, 0).unwrap();
    assert!(train(&mut pose, &ex, &ex, &TrainConfig::default(), |_| {}).is_err());
    let mut depth = build_pixels2depth(&sensor(), 0).unwrap();
    let bad = TrainConfig {
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    assert!(train(&mut depth, &ex, &ex, &bad, |_| {}).is_err());
    assert!(depth_examples(std::iter::empty()).is_err());
}

#[test]
fn constant_depth_gives_repeatable_finite_maps() {
    let p = build_depth2pose(3.0, 4).unwrap();
    let d = pixels2pose::map::Map::filled(32, 32, 2.0);
    let a = infer_pose_maps(&p, &d).unwrap();
    assert!(a.heatmaps.iter().chain(&a.pafs).all(|v| v.is_finite()));
    assert_eq!(a, infer_pose_maps(&p, &d).unwrap());
}

#[test]
fn quantized_files_are_small_and_close() {
    let m = build_depth2pose(3.0, 5).unwrap();
    let q = quantize_weights(&m);
    let float_bytes = encode_model(&StoredModel::Float(m.clone()), Vec::new()).unwrap();
    let q_bytes = encode_model(&StoredModel::Quantized(q.clone()), Vec::new()).unwrap();
    assert!((q_bytes.len() as f64) <= 0.30 * float_bytes.len() as f64);
    let back = q.dequantize().unwrap();
    for (p, (b, t)) in m.params.iter().zip(back.params.iter().zip(&q.tensors)) {
        for (x, y) in p.value.data().iter().zip(b.value.data()) {
            assert!(
                (x - y).abs() <= t.scale / 2.0 + 1e-6 * t.scale.max(1.0),
                "{}",
                p.name
            );
        }
    }
    let reloaded = decode_model(&q_bytes[..]).unwrap();
    assert!(reloaded.is_quantized());
    assert_eq!(encode_model(&reloaded, Vec::new()).unwrap(), q_bytes);
}

#[test]
fn architecture_ids_round_trip() {
    for spec in [
        ArchSpec::pixels2depth(100, 2.998),
        ArchSpec::depth2pose(2.5),
    ] {
        assert_eq!(ArchSpec::parse(&spec.id()).unwrap(), spec);
    }
    assert!(ArchSpec::parse("resnet").is_err());
    assert!(ArchSpec::parse("depth2pose-v1;range=-1").is_err());
}
