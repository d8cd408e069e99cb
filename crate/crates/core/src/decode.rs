//! Skeleton decoding: heatmap peaks, limb scoring along part affinity fields, greedy
//! assembly into people, and lifting to 3D with the depth map.

use crate::camera::Intrinsics;
use crate::map::Map;
use crate::scene::{LIMBS, NUM_JOINTS, NUM_LIMBS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub peak_threshold: f32,
    pub max_peaks: usize,
    pub paf_samples: usize,
    /// Samples whose alignment exceeds `paf_min_dot` must number at least this many.
    pub paf_min_aligned: usize,
    pub paf_min_dot: f32,
    pub min_joints: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            peak_threshold: 0.1,
            max_peaks: 6,
            paf_samples: 10,
            paf_min_aligned: 8,
            paf_min_dot: 0.05,
            min_joints: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint2D {
    pub joint: usize,
    pub u: f32,
    pub v: f32,
    pub score: f32,
}

/// Square single-channel view used by the decoder.
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a> {
    pub size: usize,
    pub data: &'a [f32],
}

impl Plane<'_> {
    fn at(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.size + col]
    }

    /// Bilinear sample with border clamping.
    pub fn sample(&self, u: f32, v: f32) -> f32 {
        let max = (self.size - 1) as f32;
        let (u, v) = (u.clamp(0.0, max), v.clamp(0.0, max));
        let (c0, r0) = (u.floor() as usize, v.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(self.size - 1), (r0 + 1).min(self.size - 1));
        let (fu, fv) = (u - c0 as f32, v - r0 as f32);
        let top = self.at(c0, r0) * (1.0 - fu) + self.at(c1, r0) * fu;
        let bot = self.at(c0, r1) * (1.0 - fu) + self.at(c1, r1) * fu;
        top * (1.0 - fv) + bot * fv
    }
}

/// Vertex offset of the parabola through three equally spaced samples.
fn parabola_offset(l: f32, c: f32, r: f32) -> f32 {
    let denom = l - 2.0 * c + r;
    if denom < 0.0 {
        (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Strict 3x3 local maxima at or above the threshold, refined to sub-pixel positions,
/// strongest first (ties in row-major order), at most `cfg.max_peaks`.
pub fn extract_peaks(heatmap: Plane<'_>, joint: usize, cfg: &DecodeConfig) -> Vec<Keypoint2D> {
    let n = heatmap.size;
    let mut peaks = Vec::new();
    for row in 0..n {
        for col in 0..n {
            let c = heatmap.at(col, row);
            if !(c >= cfg.peak_threshold) {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in -1i32..=1 {
                for dc in -1i32..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (r2, c2) = (row as i32 + dr, col as i32 + dc);
                    if r2 < 0 || c2 < 0 || r2 >= n as i32 || c2 >= n as i32 {
                        continue;
                    }
                    if heatmap.at(c2 as usize, r2 as usize) >= c {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let du = if col > 0 && col + 1 < n {
                parabola_offset(heatmap.at(col - 1, row), c, heatmap.at(col + 1, row))
            } else {
                0.0
            };
            let dv = if row > 0 && row + 1 < n {
                parabola_offset(heatmap.at(col, row - 1), c, heatmap.at(col, row + 1))
            } else {
                0.0
            };
            peaks.push((
                row * n + col,
                Keypoint2D {
                    joint,
                    u: col as f32 + du,
                    v: row as f32 + dv,
                    score: c,
                },
            ));
        }
    }
    peaks.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
    peaks.truncate(cfg.max_peaks);
    peaks.into_iter().map(|(_, k)| k).collect()
}

/// Mean alignment of the limb's field with the segment `a -> b`, or -1 when too few
/// samples agree or the segment has no length.
pub fn score_limb(
    paf_x: Plane<'_>,
    paf_y: Plane<'_>,
    a: &Keypoint2D,
    b: &Keypoint2D,
    cfg: &DecodeConfig,
) -> f32 {
    let (dx, dy) = (b.u - a.u, b.v - a.v);
    let len = (dx * dx + dy * dy).sqrt();
    if !(len > 1e-6) {
        return -1.0;
    }
    let (ex, ey) = (dx / len, dy / len);
    let n = cfg.paf_samples.max(2);
    let mut sum = 0.0;
    let mut aligned = 0;
    for i in 0..n {
        let t = i as f32 / (n - 1) as f32;
        let (u, v) = (a.u + t * dx, a.v + t * dy);
        let d = paf_x.sample(u, v) * ex + paf_y.sample(u, v) * ey;
        sum += d;
        if d > cfg.paf_min_dot {
            aligned += 1;
        }
    }
    if aligned < cfg.paf_min_aligned {
        return -1.0;
    }
    sum / n as f32
}

/// Greedy one-to-one matching: pairs by descending score (ties by row, then column),
/// skipping rejected (negative) scores and already-used endpoints.
pub fn greedy_match(scores: &[Vec<f32>]) -> Vec<(usize, usize, f32)> {
    let mut pairs: Vec<(usize, usize, f32)> = scores
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &s)| (i, j, s)))
        .filter(|&(_, _, s)| s >= 0.0)
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let cols = scores.first().map_or(0, |r| r.len());
    let (mut used_a, mut used_b) = (vec![false; scores.len()], vec![false; cols]);
    let mut out = Vec::new();
    for (i, j, s) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j, s));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton2D {
    pub joints: [Option<Keypoint2D>; NUM_JOINTS],
    /// Mean score of the limbs that built this skeleton.
    pub score: f32,
}

impl Skeleton2D {
    pub fn joint_count(&self) -> usize {
        self.joints.iter().flatten().count()
    }
}

struct Partial {
    /// Peak index per joint type.
    slots: [Option<usize>; NUM_JOINTS],
    limb_scores: Vec<f32>,
}

/// Groups limb connections into people. `peaks[j]` holds the candidates of joint type `j`;
/// `pafs` holds two channels per limb.
pub fn assemble_skeletons(
    peaks: &[Vec<Keypoint2D>],
    pafs: &[Plane<'_>],
    cfg: &DecodeConfig,
) -> Vec<Skeleton2D> {
    assert_eq!(peaks.len(), NUM_JOINTS);
    assert_eq!(pafs.len(), 2 * NUM_LIMBS);
    let mut people: Vec<Partial> = Vec::new();
    let owner = |people: &Vec<Partial>, joint: usize, idx: usize| {
        people.iter().position(|p| p.slots[joint] == Some(idx))
    };
    for (l, &(ja, jb)) in LIMBS.iter().enumerate() {
        let (ja, jb) = (ja.index(), jb.index());
        let (ca, cb) = (&peaks[ja], &peaks[jb]);
        if ca.is_empty() || cb.is_empty() {
            continue;
        }
        let scores: Vec<Vec<f32>> = ca
            .iter()
            .map(|a| {
                cb.iter()
                    .map(|b| score_limb(pafs[2 * l], pafs[2 * l + 1], a, b, cfg))
                    .collect()
            })
            .collect();
        for (i, j, s) in greedy_match(&scores) {
            match (owner(&people, ja, i), owner(&people, jb, j)) {
                (None, None) => {
                    let mut slots = [None; NUM_JOINTS];
                    slots[ja] = Some(i);
                    slots[jb] = Some(j);
                    people.push(Partial {
                        slots,
                        limb_scores: vec![s],
                    });
                }
                (Some(p), None) => {
                    if people[p].slots[jb].is_none() {
                        people[p].slots[jb] = Some(j);
                        people[p].limb_scores.push(s);
                    }
                }
                (None, Some(p)) => {
                    if people[p].slots[ja].is_none() {
                        people[p].slots[ja] = Some(i);
                        people[p].limb_scores.push(s);
                    }
                }
                (Some(p), Some(q)) if p == q => people[p].limb_scores.push(s),
                (Some(p), Some(q)) => {
                    let disjoint = (0..NUM_JOINTS)
                        .all(|k| people[p].slots[k].is_none() || people[q].slots[k].is_none());
                    if disjoint {
                        let (keep, gone) = (p.min(q), p.max(q));
                        let other = people.remove(gone);
                        let target = &mut people[keep];
                        for k in 0..NUM_JOINTS {
                            if other.slots[k].is_some() {
                                target.slots[k] = other.slots[k];
                            }
                        }
                        target.limb_scores.extend(other.limb_scores);
                        target.limb_scores.push(s);
                    }
                }
            }
        }
    }
    people
        .into_iter()
        .filter(|p| p.slots.iter().flatten().count() >= cfg.min_joints)
        .map(|p| {
            let mut joints = [None; NUM_JOINTS];
            for (k, slot) in p.slots.iter().enumerate() {
                joints[k] = slot.map(|i| peaks[k][i]);
            }
            Skeleton2D {
                joints,
                score: p.limb_scores.iter().sum::<f32>() / p.limb_scores.len() as f32,
            }
        })
        .collect()
}

/// Peaks of every joint type, then assembly.
pub fn decode_pose(
    heatmaps: &[f32],
    pafs: &[f32],
    size: usize,
    cfg: &DecodeConfig,
) -> Vec<Skeleton2D> {
    let n = size * size;
    let peaks: Vec<Vec<Keypoint2D>> = (0..NUM_JOINTS)
        .map(|j| {
            let plane = Plane {
                size,
                data: &heatmaps[j * n..(j + 1) * n],
            };
            extract_peaks(plane, j, cfg)
        })
        .collect();
    let planes: Vec<Plane<'_>> = (0..2 * NUM_LIMBS)
        .map(|c| Plane {
            size,
            data: &pafs[c * n..(c + 1) * n],
        })
        .collect();
    assemble_skeletons(&peaks, &planes, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Joint3D {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub valid: bool,
}

impl Joint3D {
    pub fn position(&self) -> [f32; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Skeleton3D {
    pub joints: [Joint3D; NUM_JOINTS],
}

impl Skeleton3D {
    pub fn from_positions(positions: &[[f32; 3]; NUM_JOINTS]) -> Self {
        let mut s = Skeleton3D::default();
        for (j, p) in s.joints.iter_mut().zip(positions) {
            *j = Joint3D {
                x: p[0],
                y: p[1],
                z: p[2],
                valid: true,
            };
        }
        s
    }
}

/// Median of the 3x3 window around `(col, row)`, clipped at the border.
fn window_median(d: &Map, col: usize, row: usize) -> f32 {
    let mut vals = Vec::with_capacity(9);
    for r in row.saturating_sub(1)..=(row + 1).min(d.height - 1) {
        for c in col.saturating_sub(1)..=(col + 1).min(d.width - 1) {
            vals.push(d.get(c, r));
        }
    }
    vals.sort_by(f32::total_cmp);
    let m = vals.len() / 2;
    if vals.len() % 2 == 1 {
        vals[m]
    } else {
        0.5 * (vals[m - 1] + vals[m])
    }
}

/// Back-projects every assigned joint using the median depth around its pixel.
pub fn lift_to_3d(s: &Skeleton2D, depth: &Map, k: &Intrinsics) -> Skeleton3D {
    let mut out = Skeleton3D::default();
    for (j, kp) in s.joints.iter().enumerate() {
        let Some(kp) = kp else { continue };
        let col = (kp.u.round().max(0.0) as usize).min(depth.width - 1);
        let row = (kp.v.round().max(0.0) as usize).min(depth.height - 1);
        let z = window_median(depth, col, row);
        if !(z > 0.0 && z.is_finite()) {
            continue;
        }
        let p = k.back_project(kp.u as f64, kp.v as f64, z as f64);
        out.joints[j] = Joint3D {
            x: p[0] as f32,
            y: p[1] as f32,
            z: p[2] as f32,
            valid: true,
        };
    }
    out
}

/// Reference point for matching people: the neck, else the centroid of valid joints.
fn anchor(s: &Skeleton3D) -> Option<[f32; 3]> {
    let neck = s.joints[crate::scene::Joint::Neck.index()];
    if neck.valid {
        return Some(neck.position());
    }
    let valid: Vec<[f32; 3]> = s
        .joints
        .iter()
        .filter(|j| j.valid)
        .map(|j| j.position())
        .collect();
    if valid.is_empty() {
        return None;
    }
    let n = valid.len() as f32;
    Some([0, 1, 2].map(|a| valid.iter().map(|p| p[a]).sum::<f32>() / n))
}

/// Cost charged for pairing a person that has no usable joints.
const UNANCHORED_COST: f64 = 1e6;

fn pair_cost(a: &Skeleton3D, b: &Skeleton3D) -> f64 {
    match (anchor(a), anchor(b)) {
        (Some(p), Some(q)) => (0..3)
            .map(|i| ((p[i] - q[i]) as f64).powi(2))
            .sum::<f64>()
            .sqrt(),
        _ => UNANCHORED_COST,
    }
}

/// For each ground-truth person, the index of its matched prediction (if any), chosen to
/// minimise the summed anchor distance over all one-to-one assignments.
pub fn match_to_ground_truth(predicted: &[Skeleton3D], truth: &[Skeleton3D]) -> Vec<Option<usize>> {
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| predicted.iter().map(|p| pair_cost(p, t)).collect())
        .collect();
    let pairs = truth.len().min(predicted.len());
    let mut best: (f64, Vec<Option<usize>>) = (f64::INFINITY, vec![None; truth.len()]);
    let mut current = vec![None; truth.len()];
    let mut used = vec![false; predicted.len()];
    search(&cost, 0, pairs, 0.0, &mut current, &mut used, &mut best);
    best.1
}

/// Depth-first enumeration of assignments that pair exactly `pairs` people.
fn search(
    cost: &[Vec<f64>],
    t: usize,
    pairs: usize,
    acc: f64,
    current: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
    best: &mut (f64, Vec<Option<usize>>),
) {
    let assigned = current[..t].iter().flatten().count();
    if t == cost.len() {
        if assigned == pairs && acc < best.0 {
            *best = (acc, current.clone());
        }
        return;
    }
    // Truths left must still be able to fill the required number of pairs.
    if assigned + (cost.len() - t) < pairs {
        return;
    }
    for p in 0..used.len() {
        if !used[p] {
            used[p] = true;
            current[t] = Some(p);
            search(cost, t + 1, pairs, acc + cost[t][p], current, used, best);
            used[p] = false;
        }
    }
    current[t] = None;
    search(cost, t + 1, pairs, acc, current, used, best);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(size: usize, cu: f32, cv: f32, peak: f32, sigma: f32) -> Vec<f32> {
        (0..size * size)
            .map(|i| {
                let (u, v) = ((i % size) as f32, (i / size) as f32);
                peak * (-((u - cu).powi(2) + (v - cv).powi(2)) / (2.0 * sigma * sigma)).exp()
            })
            .collect()
    }

    #[test]
    fn symmetric_blob_gives_one_centred_peak() {
        let h = gaussian(32, 10.0, 12.0, 1.0, 1.5);
        let p = extract_peaks(Plane { size: 32, data: &h }, 3, &DecodeConfig::default());
        assert_eq!(p.len(), 1);
        assert!((p[0].u - 10.0).abs() < 0.25 && (p[0].v - 12.0).abs() < 0.25);
        assert_eq!(p[0].joint, 3);
    }

    #[test]
    fn empty_map_and_ordering() {
        let cfg = DecodeConfig::default();
        let zero = vec![0.0; 1024];
        assert!(extract_peaks(
            Plane {
                size: 32,
                data: &zero
            },
            0,
            &cfg
        )
        .is_empty());
        let a = gaussian(32, 8.0, 16.0, 0.8, 1.5);
        let b = gaussian(32, 16.0, 16.0, 0.9, 1.5);
        let h: Vec<f32> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
        let p = extract_peaks(Plane { size: 32, data: &h }, 0, &cfg);
        assert_eq!(p.len(), 2);
        assert!((p[0].score - 0.9).abs() < 1e-6 && (p[1].score - 0.8).abs() < 1e-6);
    }

    #[test]
    fn limb_scores_for_aligned_perpendicular_and_reversed_fields() {
        let cfg = DecodeConfig::default();
        let ones = vec![1.0; 1024];
        let zeros = vec![0.0; 1024];
        let neg = vec![-1.0; 1024];
        let a = Keypoint2D {
            joint: 1,
            u: 5.0,
            v: 10.0,
            score: 1.0,
        };
        let b = Keypoint2D {
            joint: 0,
            u: 15.0,
            v: 10.0,
            score: 1.0,
        };
        let p = |d: &'static [f32]| Plane { size: 32, data: d };
        let (ones, zeros, neg): (&'static [f32], &'static [f32], &'static [f32]) = (
            Box::leak(ones.into_boxed_slice()),
            Box::leak(zeros.into_boxed_slice()),
            Box::leak(neg.into_boxed_slice()),
        );
        assert!((score_limb(p(ones), p(zeros), &a, &b, &cfg) - 1.0).abs() < 1e-6);
        assert_eq!(score_limb(p(zeros), p(ones), &a, &b, &cfg), -1.0);
        assert_eq!(score_limb(p(neg), p(zeros), &a, &b, &cfg), -1.0);
        assert_eq!(score_limb(p(ones), p(zeros), &a, &a, &cfg), -1.0);
    }

    #[test]
    fn lift_examples() {
        let k = Intrinsics::from_diagonal_fov(32, 32, 60.0).unwrap();
        let depth = Map::filled(32, 32, 1.0);
        let mut s = Skeleton2D {
            joints: [None; NUM_JOINTS],
            score: 1.0,
        };
        s.joints[1] = Some(Keypoint2D {
            joint: 1,
            u: 15.5,
            v: 15.5,
            score: 1.0,
        });
        s.joints[2] = Some(Keypoint2D {
            joint: 2,
            u: 23.5,
            v: 15.5,
            score: 1.0,
        });
        let out = lift_to_3d(&s, &depth, &k);
        assert!(out.joints[1].x.abs() < 1e-6 && out.joints[1].y.abs() < 1e-6);
        assert_eq!(out.joints[1].z, 1.0);
        assert!((out.joints[2].x - 0.2041).abs() < 1e-4);
        assert!(!out.joints[0].valid);
    }

    #[test]
    fn matching_examples() {
        let person = |x: f32| {
            let mut s = Skeleton3D::default();
            s.joints[1] = Joint3D {
                x,
                y: 0.0,
                z: 2.5,
                valid: true,
            };
            s
        };
        let a = vec![person(-0.5), person(0.5)];
        assert_eq!(match_to_ground_truth(&a, &a), vec![Some(0), Some(1)]);
        let swapped = vec![person(0.5), person(-0.5)];
        assert_eq!(match_to_ground_truth(&swapped, &a), vec![Some(1), Some(0)]);
        let three = vec![person(-0.5), person(0.0), person(0.5)];
        let m = match_to_ground_truth(&a, &three);
        assert_eq!(m.iter().flatten().count(), 2);
        assert_eq!(m, vec![Some(0), None, Some(1)]);
        assert!(match_to_ground_truth(&[], &a).iter().all(|m| m.is_none()));
    }
}
