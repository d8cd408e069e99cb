//! Supervision targets: low-resolution depth, joint confidence maps and part affinity fields.

use super::render::{Caster, RenderOutput};
use super::skeleton::{LIMBS, NUM_JOINTS, NUM_LIMBS};
use super::{Scene, SceneConfig};
use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use crate::map::Map;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Joint2D {
    pub u: f32,
    pub v: f32,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub resolution: usize,
    /// `NUM_JOINTS` maps of `resolution^2`, channel-major.
    pub heatmaps: Vec<f32>,
    /// Two channels (x, y) per limb, channel-major.
    pub pafs: Vec<f32>,
    pub joints2d: Vec<[Joint2D; NUM_JOINTS]>,
    pub joints3d: Vec<[[f32; 3]; NUM_JOINTS]>,
    pub depth32: Map,
}

impl LabelSet {
    pub fn heatmap(&self, joint: usize) -> &[f32] {
        let n = self.resolution * self.resolution;
        &self.heatmaps[joint * n..(joint + 1) * n]
    }

    pub fn paf(&self, channel: usize) -> &[f32] {
        let n = self.resolution * self.resolution;
        &self.pafs[channel * n..(channel + 1) * n]
    }

    pub fn persons(&self) -> usize {
        self.joints3d.len()
    }
}

/// Catmull-Rom cubic convolution kernel (a = -0.5).
fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Resamples one axis of length `n_in` down to `n_out` samples at the output pixel centres.
fn cubic_taps(n_in: usize, n_out: usize) -> Vec<[(usize, f64); 4]> {
    let s = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let x = (i as f64 + 0.5) * s - 0.5;
            let base = x.floor() as isize;
            let mut taps = [(0usize, 0.0f64); 4];
            for (k, tap) in taps.iter_mut().enumerate() {
                let idx = base - 1 + k as isize;
                let clamped = idx.clamp(0, n_in as isize - 1) as usize;
                *tap = (clamped, cubic_weight(x - idx as f64));
            }
            taps
        })
        .collect()
}

/// Bicubic downsampling of a z-depth map to `out_size x out_size`.
///
/// No-hit (non-finite) pixels are replaced by `fill_depth` first; the result is clamped to
/// the range of the filled input.
pub fn downsample_depth(hr: &Map, out_size: usize, fill_depth: f32) -> Result<Map> {
    if out_size == 0
        || !hr.width.is_multiple_of(out_size)
        || !hr.height.is_multiple_of(out_size)
        || hr.width == 0
        || hr.height == 0
    {
        return Err(Error::Shape(format!(
            "depth map {}x{} is not an integer multiple of {out_size}",
            hr.width, hr.height
        )));
    }
    let filled: Vec<f64> = hr
        .data
        .iter()
        .map(|&z| {
            if z.is_finite() {
                z as f64
            } else {
                fill_depth as f64
            }
        })
        .collect();
    let (lo, hi) = filled
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let tx = cubic_taps(hr.width, out_size);
    let ty = cubic_taps(hr.height, out_size);

    let mut horizontal = vec![0.0f64; hr.height * out_size];
    for row in 0..hr.height {
        let src = &filled[row * hr.width..(row + 1) * hr.width];
        for (i, taps) in tx.iter().enumerate() {
            horizontal[row * out_size + i] = taps.iter().map(|&(c, w)| w * src[c]).sum();
        }
    }
    let mut out = Map::filled(out_size, out_size, 0.0);
    for (j, taps) in ty.iter().enumerate() {
        for i in 0..out_size {
            let v: f64 = taps
                .iter()
                .map(|&(r, w)| w * horizontal[r * out_size + i])
                .sum();
            out.set(i, j, v.clamp(lo, hi) as f32);
        }
    }
    Ok(out)
}

/// Distance from `p` to the segment `a`-`b` in the image plane.
fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    (p.0 - cx).hypot(p.1 - cy)
}

/// Builds labels for a rendered scene. `render` must come from the same scene; its z-depth
/// is downsampled to the label resolution of `intrinsics`.
pub fn make_labels(
    scene: &Scene,
    render: &RenderOutput,
    intrinsics: &Intrinsics,
    cfg: &SceneConfig,
) -> Result<LabelSet> {
    let res = intrinsics.width;
    if intrinsics.height != res {
        return Err(Error::Shape("label grid must be square".into()));
    }
    let fill = scene.background_depth.unwrap_or(0.0) as f32;
    let depth32 = downsample_depth(&render.zdepth, res, fill)?;
    let caster = Caster::new(scene);

    let mut joints2d = Vec::with_capacity(scene.persons.len());
    let mut joints3d = Vec::with_capacity(scene.persons.len());
    for (pi, person) in scene.persons.iter().enumerate() {
        let mut j2 = [Joint2D::default(); NUM_JOINTS];
        let mut j3 = [[0.0f32; 3]; NUM_JOINTS];
        for (j, &p) in person.pose.joints.iter().enumerate() {
            j3[j] = [p[0] as f32, p[1] as f32, p[2] as f32];
            if let Some((u, v)) = intrinsics.project(p) {
                let on_image = intrinsics.contains(u, v);
                let ray = [p[0] / p[2], p[1] / p[2], 1.0];
                let own_surface = caster
                    .cast([0.0; 3], ray)
                    .is_some_and(|hit| hit.person == Some(pi));
                j2[j] = Joint2D {
                    u: u as f32,
                    v: v as f32,
                    visible: on_image && own_surface,
                };
            }
        }
        joints2d.push(j2);
        joints3d.push(j3);
    }

    let n = res * res;
    let two_sigma2 = 2.0 * cfg.heatmap_sigma * cfg.heatmap_sigma;
    let mut heatmaps = vec![0.0f32; NUM_JOINTS * n];
    for j in 0..NUM_JOINTS {
        let map = &mut heatmaps[j * n..(j + 1) * n];
        for person in &joints2d {
            let jp = person[j];
            if !jp.visible {
                continue;
            }
            let (ju, jv) = (jp.u as f64, jp.v as f64);
            for row in 0..res {
                for col in 0..res {
                    let d2 = (col as f64 - ju).powi(2) + (row as f64 - jv).powi(2);
                    let g = (-d2 / two_sigma2).exp() as f32;
                    let cell = &mut map[row * res + col];
                    if g > *cell {
                        *cell = g;
                    }
                }
            }
        }
    }

    let mut pafs = vec![0.0f32; 2 * NUM_LIMBS * n];
    for (l, &(pa, pb)) in LIMBS.iter().enumerate() {
        let mut sum = vec![(0.0f64, 0.0f64, 0u32); n];
        for person in &joints2d {
            let (a, b) = (person[pa.index()], person[pb.index()]);
            if !(a.visible && b.visible) {
                continue;
            }
            let a = (a.u as f64, a.v as f64);
            let b = (b.u as f64, b.v as f64);
            let len = (b.0 - a.0).hypot(b.1 - a.1);
            if len < 1e-9 {
                continue;
            }
            let dir = ((b.0 - a.0) / len, (b.1 - a.1) / len);
            for row in 0..res {
                for col in 0..res {
                    if point_segment_distance((col as f64, row as f64), a, b) <= cfg.paf_width {
                        let s = &mut sum[row * res + col];
                        s.0 += dir.0;
                        s.1 += dir.1;
                        s.2 += 1;
                    }
                }
            }
        }
        for (i, &(sx, sy, count)) in sum.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let (mut x, mut y) = (sx / count as f64, sy / count as f64);
            let mag = x.hypot(y);
            if mag > 1.0 {
                x /= mag;
                y /= mag;
            }
            pafs[(2 * l) * n + i] = x as f32;
            pafs[(2 * l + 1) * n + i] = y as f32;
        }
    }

    Ok(LabelSet {
        resolution: res,
        heatmaps,
        pafs,
        joints2d,
        joints3d,
        depth32,
    })
}
