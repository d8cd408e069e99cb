mod common;

use pixels2pose::decode::{Joint3D, Skeleton3D};
use pixels2pose::metrics::*;
use pixels2pose::scene::NUM_JOINTS;

#[test]
fn statistics_match_the_reference_on_random_records() {
    let recs = common::random_records(10_000, 5);
    let (rmse, ae, p15) = common::reference_stats(&recs, 15.0);
    for (axis, r) in rmse.iter().enumerate() {
        assert!((rmse_axis(&recs, axis).unwrap() - r).abs() < 1e-9);
    }
    assert!((average_error(&recs).unwrap() - ae).abs() < 1e-9);
    assert!((pck(&recs, 15.0).unwrap() - p15).abs() < 1e-9);
}

#[test]
fn pck_is_monotone_in_the_threshold() {
    let recs = common::random_records(2000, 9);
    let mut last = 0.0;
    for tau in [1.0, 5.0, 15.0, 20.0, 30.0, 80.0] {
        let p = pck(&recs, tau).unwrap();
        assert!(p >= last && (0.0..=100.0).contains(&p));
        last = p;
    }
}

fn person(offset: f32) -> Skeleton3D {
    let mut pos = [[0.0f32; 3]; NUM_JOINTS];
    for (j, p) in pos.iter_mut().enumerate() {
        *p = [offset + 0.01 * j as f32, -0.5 + 0.1 * j as f32, 2.5];
    }
    Skeleton3D::from_positions(&pos)
}

#[test]
fn perfect_predictions_score_perfectly() {
    let frames: Vec<FramePoses> = (0..5)
        .map(|i| FramePoses {
            frame_id: i,
            persons: vec![person(-0.4), person(0.4)],
        })
        .collect();
    let r = build_report(&frames, &frames).unwrap();
    assert_eq!(r.rows.len(), 7);
    for row in &r.rows {
        assert_eq!(row.rmse_cm, [0.0; 3]);
        assert_eq!(row.ae_cm, 0.0);
        assert_eq!(row.pck, [100.0; 3]);
        assert_eq!(row.missed, 0);
    }
    let table = r.to_table();
    for col in [
        "RMSE_x", "RMSE_y", "RMSE_z", "AE", "PCK-15", "PCK-20", "PCK-30",
    ] {
        assert!(table.contains(col));
    }
    assert_eq!(r.to_json_lines().lines().count(), 7);
}

#[test]
fn swapped_people_are_matched_back() {
    let truth = vec![FramePoses {
        frame_id: 0,
        persons: vec![person(-0.4), person(0.4)],
    }];
    let pred = vec![FramePoses {
        frame_id: 0,
        persons: vec![person(0.4), person(-0.4)],
    }];
    let r = build_report(&pred, &truth).unwrap();
    assert!(r.rows.iter().all(|row| row.ae_cm == 0.0));
}

#[test]
fn missed_joints_cap_pck() {
    let truth = vec![FramePoses {
        frame_id: 0,
        persons: vec![person(0.0)],
    }];
    let mut half = person(0.0);
    for (j, joint) in half.joints.iter_mut().enumerate() {
        if j % 2 == 0 {
            *joint = Joint3D::default();
        }
    }
    let pred = vec![FramePoses {
        frame_id: 0,
        persons: vec![half],
    }];
    let r = build_report(&pred, &truth).unwrap();
    let total_missed: usize = r.rows.iter().map(|row| row.missed).sum();
    assert!(total_missed >= 6);
    for row in &r.rows {
        if row.missed > 0 {
            assert!(row.pck[2] <= 50.0);
        }
    }
}

#[test]
fn mirrored_scenes_pool_identically() {
    use pixels2pose::scene::Joint;
    let recs = common::random_records(500, 3);
    // Left/right swaps keep every record in its group.
    let mirrored: Vec<JointErrorRecord> = recs
        .iter()
        .map(|r| JointErrorRecord {
            error_cm: r.error_cm.map(|e| [-e[0], e[1], e[2]]),
            ..*r
        })
        .collect();
    let a = report_from_records(&recs).unwrap();
    let b = report_from_records(&mirrored).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!((x.ae_cm - y.ae_cm).abs() < 1e-9);
        assert_eq!(x.pck, y.pck);
    }
    for j in Joint::ALL {
        assert_eq!(JointGroup::of(j), JointGroup::of(j.mirrored()));
    }
}
