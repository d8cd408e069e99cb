//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

pub mod grad;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pixels2pose::camera::Intrinsics;
use pixels2pose::decode::{
    decode_pose, greedy_match, score_limb, DecodeConfig, Keypoint2D, Plane, Skeleton2D,
};
use pixels2pose::metrics::JointErrorRecord;
use pixels2pose::scene::{
    make_labels, render_depth, sample_scene, LabelSet, SceneConfig, LIMBS, NUM_JOINTS, NUM_LIMBS,
};

/// Labels of a random scene, rendered without the sensor model.
pub fn label_scene(seed: u64, persons: usize) -> LabelSet {
    let cfg = SceneConfig::default();
    let k32 = Intrinsics::from_diagonal_fov(32, 32, 60.0).unwrap();
    let hr = Intrinsics::from_diagonal_fov(cfg.hr_resolution, cfg.hr_resolution, 60.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = sample_scene(&mut rng, persons, &cfg, &k32).unwrap();
    let render = render_depth(&scene, &hr);
    make_labels(&scene, &render, &k32, &cfg).unwrap()
}

/// Smallest 2D distance between the necks of different people, in pixels.
pub fn person_separation(l: &LabelSet) -> f32 {
    let mut best = f32::INFINITY;
    for a in 0..l.persons() {
        for b in a + 1..l.persons() {
            let (p, q) = (l.joints2d[a][1], l.joints2d[b][1]);
            best = best.min((p.u - q.u).hypot(p.v - q.v));
        }
    }
    best
}

/// Visible joints of `l` recovered within `tol` pixels by the decoded skeletons, with each
/// person paired to a distinct skeleton. Returns (recovered, visible).
pub fn recovered_joints(l: &LabelSet, skeletons: &[Skeleton2D], tol: f32) -> (usize, usize) {
    let hits = |p: usize, s: &Skeleton2D| {
        (0..NUM_JOINTS)
            .filter(|&j| {
                let g = l.joints2d[p][j];
                g.visible && s.joints[j].is_some_and(|k| (k.u - g.u).hypot(k.v - g.v) <= tol)
            })
            .count()
    };
    let visible: usize = (0..l.persons())
        .map(|p| l.joints2d[p].iter().filter(|j| j.visible).count())
        .sum();
    // Exhaustive pairing of people to skeletons (at most 3 people).
    fn best(
        p: usize,
        n: usize,
        used: &mut Vec<bool>,
        score: &dyn Fn(usize, usize) -> usize,
    ) -> usize {
        if p == n {
            return 0;
        }
        let mut top = best(p + 1, n, used, score);
        for s in 0..used.len() {
            if !used[s] {
                used[s] = true;
                top = top.max(score(p, s) + best(p + 1, n, used, score));
                used[s] = false;
            }
        }
        top
    }
    let score = |p: usize, s: usize| hits(p, &skeletons[s]);
    let recovered = best(0, l.persons(), &mut vec![false; skeletons.len()], &score);
    (recovered, visible)
}

pub struct Fidelity {
    pub recovered: usize,
    pub visible: usize,
}

impl Fidelity {
    pub fn rate(&self) -> f64 {
        self.recovered as f64 / self.visible as f64
    }
}

/// Decodes `n` analytic label sets with 1 or 2 people at least `min_sep` pixels apart.
pub fn decoder_fidelity(n: usize, min_sep: f32) -> Fidelity {
    let cfg = DecodeConfig::default();
    let (mut recovered, mut visible, mut done) = (0, 0, 0);
    let mut seed = 0u64;
    while done < n {
        seed += 1;
        let persons = 1 + (seed % 2) as usize;
        let l = label_scene(seed, persons);
        if person_separation(&l) < min_sep {
            continue;
        }
        let sk = decode_pose(&l.heatmaps, &l.pafs, l.resolution, &cfg);
        let (r, v) = recovered_joints(&l, &sk, 1.0);
        recovered += r;
        visible += v;
        done += 1;
    }
    Fidelity { recovered, visible }
}

/// Best total score of any one-to-one matching that uses only non-negative entries.
pub fn brute_force_matching(scores: &[Vec<f32>]) -> f32 {
    fn go(i: usize, scores: &[Vec<f32>], used: &mut Vec<bool>) -> f32 {
        if i == scores.len() {
            return 0.0;
        }
        let mut best = go(i + 1, scores, used);
        for j in 0..used.len() {
            if !used[j] && scores[i][j] >= 0.0 {
                used[j] = true;
                best = best.max(scores[i][j] + go(i + 1, scores, used));
                used[j] = false;
            }
        }
        best
    }
    let cols = scores.first().map_or(0, |r| r.len());
    go(0, scores, &mut vec![false; cols])
}

fn greedy_reaches(scores: &[Vec<f32>], ratio: f32) -> bool {
    let greedy: f32 = greedy_match(scores).iter().map(|p| p.2).sum();
    greedy >= ratio * brute_force_matching(scores) - 1e-6
}

/// Share of `trials` limb-matching instances on which greedy matching reaches `ratio` of the
/// optimum. Each instance takes one limb type of a random 1 or 2 person scene, uses the
/// visible endpoints plus random distractors (at most 5 candidates per joint type) and scores
/// every pair with `score_limb` on the exact fields. Instances without an accepted pair are
/// redrawn.
pub fn greedy_quality(trials: usize, ratio: f32, seed: u64) -> f64 {
    let cfg = DecodeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut good = 0;
    let mut done = 0;
    while done < trials {
        let l = label_scene(rng.random(), rng.random_range(1..=2));
        let limb = rng.random_range(0..NUM_LIMBS);
        let (ja, jb) = (LIMBS[limb].0 as usize, LIMBS[limb].1 as usize);
        let candidates = |j: usize, rng: &mut ChaCha8Rng| {
            let mut c: Vec<Keypoint2D> = (0..l.persons())
                .map(|p| l.joints2d[p][j])
                .filter(|g| g.visible)
                .map(|g| Keypoint2D {
                    joint: j,
                    u: g.u,
                    v: g.v,
                    score: 1.0,
                })
                .collect();
            let extra = rng.random_range(0..=5 - c.len());
            for _ in 0..extra {
                c.push(Keypoint2D {
                    joint: j,
                    u: rng.random_range(0.0..31.0),
                    v: rng.random_range(0.0..31.0),
                    score: 1.0,
                });
            }
            c
        };
        let (a, b) = (candidates(ja, &mut rng), candidates(jb, &mut rng));
        let (px, py) = (
            Plane {
                size: 32,
                data: l.paf(2 * limb),
            },
            Plane {
                size: 32,
                data: l.paf(2 * limb + 1),
            },
        );
        let scores: Vec<Vec<f32>> = a
            .iter()
            .map(|p| b.iter().map(|q| score_limb(px, py, p, q, &cfg)).collect())
            .collect();
        if !scores.iter().flatten().any(|&s| s >= 0.0) {
            continue;
        }
        done += 1;
        good += greedy_reaches(&scores, ratio) as usize;
    }
    good as f64 / trials as f64
}

/// The same statistic on score matrices drawn uniformly from [0, 1], up to 5 by 5.
pub fn greedy_quality_uniform(trials: usize, ratio: f32, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let good = (0..trials)
        .filter(|_| {
            let (n, m) = (rng.random_range(1..=5), rng.random_range(1..=5));
            let scores: Vec<Vec<f32>> = (0..n)
                .map(|_| (0..m).map(|_| rng.random_range(0.0..1.0f32)).collect())
                .collect();
            greedy_reaches(&scores, ratio)
        })
        .count();
    good as f64 / trials as f64
}

/// Random error records (cm) with about one in ten joints missed.
pub fn random_records(n: usize, seed: u64) -> Vec<JointErrorRecord> {
    use pixels2pose::metrics::JointGroup;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| JointErrorRecord {
            frame_id: i as u32,
            group: JointGroup::ALL[rng.random_range(0..7)],
            error_cm: (rng.random::<f64>() >= 0.1)
                .then(|| [0, 1, 2].map(|_| rng.random_range(-40.0..40.0))),
        })
        .collect()
}

/// Reference statistics written straight from the definitions: per-axis RMSE, mean
/// Euclidean error over estimated joints, and the strict-threshold hit share over all.
pub fn reference_stats(records: &[JointErrorRecord], tau: f64) -> ([f64; 3], f64, f64) {
    let est: Vec<[f64; 3]> = records.iter().filter_map(|r| r.error_cm).collect();
    let n = est.len() as f64;
    let mut rmse = [0.0; 3];
    for (axis, out) in rmse.iter_mut().enumerate() {
        let mut s = 0.0;
        for e in &est {
            s += (e[axis]).powi(2);
        }
        *out = (s / n).sqrt();
    }
    let mut ae = 0.0;
    for e in &est {
        ae += (e[0].powi(2) + e[1].powi(2) + e[2].powi(2)).sqrt();
    }
    ae /= n;
    let mut hit = 0usize;
    for e in &est {
        if (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt() < tau {
            hit += 1;
        }
    }
    (rmse, ae, 100.0 * hit as f64 / records.len() as f64)
}
