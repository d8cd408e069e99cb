//! Synthetic dataset generation and the `P2PD` dataset file.
//!
//! Layout (all multi-byte values little-endian):
//!
//! ```text
//! magic "P2PD" | version u32 | frame_count u32 | persons u32 | label_resolution u32
//! sensor: grid_x u32 | grid_y u32 | n_bins_raw u32 | n_bins_crop u32 | bin_duration_ps f64
//!         fov_diagonal_deg f64 | max_range_m f64 | pulse_fwhm_bins f64 | signal_photons f64
//!         ambient_rate f64 | rng_seed u64
//! per frame:
//!   frame_id u32 | validation u8 | n_persons u32
//!   histogram u16[grid_x*grid_y*n_bins_crop] | depth32 f32[R*R]
//!   heatmaps f32[14*R*R] | pafs f32[26*R*R]
//!   per person: 14 x (u f32, v f32, visible u8) then 14 x (x f32, y f32, z f32)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::labels::{make_labels, Joint2D, LabelSet};
use super::render::render_depth;
use super::skeleton::{NUM_JOINTS, NUM_LIMBS};
use super::{sample_scene, SceneConfig};
use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use crate::io::{LeReader, LeWriter};
use crate::map::Map;
use crate::seed::{derive, Stream};
use crate::sensor::{simulate_histogram, Histogram, SensorConfig};

pub const DATASET_MAGIC: [u8; 4] = *b"P2PD";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u32,
    pub validation: bool,
    pub histogram: Histogram,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub persons: u32,
    pub sensor: SensorConfig,
    pub label_resolution: usize,
    pub frames: Vec<Frame>,
}

impl Dataset {
    pub fn training(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(|f| !f.validation)
    }

    pub fn validation(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(|f| f.validation)
    }
}

/// Synthesises one frame: scene, render, sensor histogram and labels.
pub fn generate_frame(
    frame_id: u32,
    persons: usize,
    sensor: &SensorConfig,
    scene_cfg: &SceneConfig,
    seed: u64,
) -> Result<Frame> {
    let label_k = Intrinsics::from_diagonal_fov(
        scene_cfg.label_resolution,
        scene_cfg.label_resolution,
        sensor.fov_diagonal_deg,
    )?;
    let hr_k = Intrinsics::from_diagonal_fov(
        scene_cfg.hr_resolution,
        scene_cfg.hr_resolution,
        sensor.fov_diagonal_deg,
    )?;
    let mut scene_rng = ChaCha8Rng::seed_from_u64(derive(seed, Stream::Scene, frame_id as u64));
    let mut sensor_rng = ChaCha8Rng::seed_from_u64(derive(seed, Stream::Sensor, frame_id as u64));
    let scene = sample_scene(&mut scene_rng, persons, scene_cfg, &label_k)?;
    let render = render_depth(&scene, &hr_k);
    let histogram = simulate_histogram(
        &render.radial,
        &render.reflectivity,
        sensor,
        &mut sensor_rng,
    )?;
    let labels = make_labels(&scene, &render, &label_k, scene_cfg)?;
    Ok(Frame {
        frame_id,
        validation: false,
        histogram,
        labels,
    })
}

/// Generates `n_frames` frames with `persons` people each. The first `n_validation`
/// frames form the contiguous validation split. Each frame draws from generators seeded by
/// `(seed, frame index)`, so the output does not depend on the worker count.
pub fn generate_dataset(
    n_frames: usize,
    persons: usize,
    n_validation: usize,
    sensor: &SensorConfig,
    scene_cfg: &SceneConfig,
    seed: u64,
) -> Result<Dataset> {
    if !(1..=3).contains(&persons) {
        return Err(Error::Config(format!(
            "persons per frame must be 1, 2 or 3, got {persons}"
        )));
    }
    if n_validation > n_frames {
        return Err(Error::Config(format!(
            "validation split {n_validation} exceeds frame count {n_frames}"
        )));
    }
    sensor.validate()?;
    scene_cfg.validate()?;
    let frames = (0..n_frames as u32)
        .into_par_iter()
        .map(|i| {
            let mut f = generate_frame(i, persons, sensor, scene_cfg, seed)?;
            f.validation = (i as usize) < n_validation;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        persons: persons as u32,
        sensor: sensor.clone(),
        label_resolution: scene_cfg.label_resolution,
        frames,
    })
}

pub(crate) fn write_sensor<W: Write>(w: &mut LeWriter<W>, s: &SensorConfig) -> std::io::Result<()> {
    w.u32(s.grid_x as u32)?;
    w.u32(s.grid_y as u32)?;
    w.u32(s.n_bins_raw as u32)?;
    w.u32(s.n_bins_crop as u32)?;
    w.f64(s.bin_duration_ps)?;
    w.f64(s.fov_diagonal_deg)?;
    w.f64(s.max_range_m)?;
    w.f64(s.pulse_fwhm_bins)?;
    w.f64(s.signal_photons)?;
    w.f64(s.ambient_rate)?;
    w.u64(s.rng_seed)
}

pub(crate) fn read_sensor<R: Read>(r: &mut LeReader<R>) -> Result<SensorConfig> {
    let cfg = SensorConfig {
        grid_x: r.u32("sensor.grid_x")? as usize,
        grid_y: r.u32("sensor.grid_y")? as usize,
        n_bins_raw: r.u32("sensor.n_bins_raw")? as usize,
        n_bins_crop: r.u32("sensor.n_bins_crop")? as usize,
        bin_duration_ps: r.f64("sensor.bin_duration")?,
        fov_diagonal_deg: r.f64("sensor.fov_diagonal")?,
        max_range_m: r.f64("sensor.max_range")?,
        pulse_fwhm_bins: r.f64("sensor.pulse_fwhm")?,
        signal_photons: r.f64("sensor.signal_photons")?,
        ambient_rate: r.f64("sensor.ambient_rate")?,
        rng_seed: r.u64("sensor.rng_seed")?,
    };
    cfg.validate().map_err(|e| {
        Error::Format(crate::error::FormatError::Malformed(format!(
            "sensor header: {e}"
        )))
    })?;
    Ok(cfg)
}

pub fn encode_dataset<W: Write>(ds: &Dataset, out: W) -> std::io::Result<W> {
    let mut w = LeWriter::new(out);
    w.bytes(&DATASET_MAGIC)?;
    w.u32(DATASET_VERSION)?;
    w.u32(ds.frames.len() as u32)?;
    w.u32(ds.persons)?;
    w.u32(ds.label_resolution as u32)?;
    write_sensor(&mut w, &ds.sensor)?;
    for f in &ds.frames {
        w.u32(f.frame_id)?;
        w.u8(f.validation as u8)?;
        w.u32(f.labels.persons() as u32)?;
        w.u16_slice(&f.histogram.counts)?;
        w.f32_slice(&f.labels.depth32.data)?;
        w.f32_slice(&f.labels.heatmaps)?;
        w.f32_slice(&f.labels.pafs)?;
        for (j2, j3) in f.labels.joints2d.iter().zip(&f.labels.joints3d) {
            for j in j2 {
                w.f32(j.u)?;
                w.f32(j.v)?;
                w.u8(j.visible as u8)?;
            }
            for p in j3 {
                w.f32(p[0])?;
                w.f32(p[1])?;
                w.f32(p[2])?;
            }
        }
    }
    Ok(w.into_inner())
}

pub fn decode_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut r = LeReader::new(input);
    r.magic(DATASET_MAGIC)?;
    r.version(DATASET_VERSION)?;
    let n_frames = r.u32("frame_count")? as usize;
    let persons = r.u32("persons")?;
    let res = r.u32("label_resolution")? as usize;
    let sensor = read_sensor(&mut r)?;
    let n = res * res;
    let hist_len = sensor.zones() * sensor.n_bins_crop;
    let mut frames = Vec::with_capacity(n_frames.min(1 << 16));
    for _ in 0..n_frames {
        let frame_id = r.u32("frame_id")?;
        let validation = r.u8("validation flag")? != 0;
        let np = r.u32("person count")? as usize;
        if np > 16 {
            return Err(crate::error::FormatError::Malformed(format!(
                "frame {frame_id} declares {np} persons"
            ))
            .into());
        }
        let counts = r.u16_vec(hist_len, "histogram")?;
        let depth = r.f32_vec(n, "depth32")?;
        let heatmaps = r.f32_vec(NUM_JOINTS * n, "heatmaps")?;
        let pafs = r.f32_vec(2 * NUM_LIMBS * n, "pafs")?;
        let mut joints2d = Vec::with_capacity(np);
        let mut joints3d = Vec::with_capacity(np);
        for _ in 0..np {
            let mut j2 = [Joint2D::default(); NUM_JOINTS];
            for j in j2.iter_mut() {
                j.u = r.f32("joints2d")?;
                j.v = r.f32("joints2d")?;
                j.visible = r.u8("joints2d visibility")? != 0;
            }
            let mut j3 = [[0.0f32; 3]; NUM_JOINTS];
            for p in j3.iter_mut() {
                *p = [r.f32("joints3d")?, r.f32("joints3d")?, r.f32("joints3d")?];
            }
            joints2d.push(j2);
            joints3d.push(j3);
        }
        frames.push(Frame {
            frame_id,
            validation,
            histogram: Histogram {
                grid_x: sensor.grid_x,
                grid_y: sensor.grid_y,
                n_bins: sensor.n_bins_crop,
                counts,
            },
            labels: LabelSet {
                resolution: res,
                heatmaps,
                pafs,
                joints2d,
                joints3d,
                depth32: Map::from_vec(res, res, depth),
            },
        });
    }
    r.expect_end()?;
    Ok(Dataset {
        persons,
        sensor,
        label_resolution: res,
        frames,
    })
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = encode_dataset(ds, BufWriter::new(file)).map_err(|e| Error::file(path, e))?;
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    decode_dataset(BufReader::new(file))
}
