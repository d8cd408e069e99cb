mod common;

use pixels2pose::camera::Intrinsics;
use pixels2pose::decode::*;
use pixels2pose::map::Map;
use pixels2pose::scene::NUM_JOINTS;

#[test]
fn exact_labels_decode_to_their_people() {
    let f = common::decoder_fidelity(200, 6.0);
    assert!(
        f.rate() >= 0.95,
        "recovered {} of {}",
        f.recovered,
        f.visible
    );
}

#[test]
fn one_person_gives_one_skeleton() {
    let cfg = DecodeConfig::default();
    for seed in 1..20 {
        let l = common::label_scene(seed * 2 + 1000, 1);
        let sk = decode_pose(&l.heatmaps, &l.pafs, 32, &cfg);
        assert_eq!(sk.len(), 1, "seed {seed}");
    }
}

#[test]
fn two_separated_people_share_no_keypoints() {
    let cfg = DecodeConfig::default();
    let mut checked = 0;
    for seed in 1..60 {
        let l = common::label_scene(seed + 5000, 2);
        if common::person_separation(&l) < 6.0 || l.joints2d.iter().any(|p| !p[1].visible) {
            continue;
        }
        let sk = decode_pose(&l.heatmaps, &l.pafs, 32, &cfg);
        assert_eq!(sk.len(), 2, "seed {seed}");
        for j in 0..NUM_JOINTS {
            if let (Some(a), Some(b)) = (sk[0].joints[j], sk[1].joints[j]) {
                assert!(a.u != b.u || a.v != b.v);
            }
        }
        checked += 1;
    }
    assert!(checked >= 15, "{checked}");
}

#[test]
fn empty_maps_give_no_skeletons() {
    let h = vec![0.0; 14 * 1024];
    let p = vec![0.0; 26 * 1024];
    assert!(decode_pose(&h, &p, 32, &DecodeConfig::default()).is_empty());
}

#[test]
fn decoding_is_deterministic() {
    let l = common::label_scene(77, 2);
    let cfg = DecodeConfig::default();
    assert_eq!(
        decode_pose(&l.heatmaps, &l.pafs, 32, &cfg),
        decode_pose(&l.heatmaps, &l.pafs, 32, &cfg)
    );
}

#[test]
fn greedy_matching_is_near_optimal() {
    assert!(common::greedy_quality(1000, 0.9, 11) >= 0.95);
    assert!(common::greedy_quality_uniform(1000, 0.9, 11) >= 0.9);
}

#[test]
fn greedy_matching_is_one_to_one_and_skips_rejections() {
    let scores = vec![vec![0.9, 0.8], vec![0.85, -1.0]];
    let m = greedy_match(&scores);
    assert_eq!(m, vec![(0, 0, 0.9)]);
    let scores = vec![vec![0.5, 0.7], vec![0.6, 0.1]];
    assert_eq!(greedy_match(&scores), vec![(0, 1, 0.7), (1, 0, 0.6)]);
}

#[test]
fn lifting_reprojects_to_the_keypoint() {
    let k = Intrinsics::from_diagonal_fov(32, 32, 60.0).unwrap();
    let mut data = vec![0.0; 1024];
    for (i, v) in data.iter_mut().enumerate() {
        *v = 1.0 + (i % 7) as f32 * 0.1;
    }
    let depth = Map::from_vec(32, 32, data);
    let mut s = Skeleton2D {
        joints: [None; NUM_JOINTS],
        score: 1.0,
    };
    for j in 0..NUM_JOINTS {
        s.joints[j] = Some(Keypoint2D {
            joint: j,
            u: 2.3 * j as f32 + 0.1,
            v: 31.0 - 2.1 * j as f32,
            score: 1.0,
        });
    }
    let out = lift_to_3d(&s, &depth, &k);
    for (j, p) in out.joints.iter().enumerate() {
        assert!(p.valid);
        let (u, v) = k.project([p.x as f64, p.y as f64, p.z as f64]).unwrap();
        let kp = s.joints[j].unwrap();
        assert!((u as f32 - kp.u).abs() < 1e-4 && (v as f32 - kp.v).abs() < 1e-4);
    }
}

#[test]
fn uniform_depth_is_returned_everywhere() {
    let k = Intrinsics::from_diagonal_fov(32, 32, 60.0).unwrap();
    let depth = Map::filled(32, 32, 2.4);
    let mut s = Skeleton2D {
        joints: [None; NUM_JOINTS],
        score: 1.0,
    };
    s.joints[5] = Some(Keypoint2D {
        joint: 5,
        u: 0.2,
        v: 31.4,
        score: 0.5,
    });
    let out = lift_to_3d(&s, &depth, &k);
    assert_eq!(out.joints[5].z, 2.4);
    assert_eq!(out.joints.iter().filter(|j| j.valid).count(), 1);
}
