//! Synthetic multi-person scenes: pose sampling, ray-cast rendering and label generation.

pub mod dataset;
pub mod labels;
pub mod render;
pub mod skeleton;

use rand::Rng;

use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use skeleton::{sample_pose, BodyShape, PoseConstraints, SkeletonPose3D};

pub use labels::{downsample_depth, make_labels, Joint2D, LabelSet};
pub use render::{render_depth, RenderOutput};
pub use skeleton::{Joint, LIMBS, NUM_JOINTS, NUM_LIMBS};

#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub body: BodyShape,
    pub pose: SkeletonPose3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub persons: Vec<Person>,
    /// z of the fronto-parallel background wall; `None` for an empty background.
    pub background_depth: Option<f64>,
    pub body_reflectivity: f32,
    pub background_reflectivity: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub constraints: PoseConstraints,
    pub min_height: f64,
    pub max_height: f64,
    pub min_girth: f64,
    pub max_girth: f64,
    pub background_depth: f64,
    pub body_reflectivity: f32,
    pub background_reflectivity: f32,
    /// Minimum pelvis separation between persons in the ground plane (m).
    pub min_person_distance: f64,
    /// Square render resolution fed to the sensor model.
    pub hr_resolution: usize,
    /// Square label resolution.
    pub label_resolution: usize,
    pub heatmap_sigma: f64,
    pub paf_width: f64,
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            constraints: PoseConstraints::default(),
            min_height: 1.55,
            max_height: 1.95,
            min_girth: 0.9,
            max_girth: 1.1,
            background_depth: 2.9,
            body_reflectivity: 0.8,
            background_reflectivity: 0.5,
            min_person_distance: 0.45,
            hr_resolution: 128,
            label_resolution: 32,
            heatmap_sigma: 1.5,
            paf_width: 1.0,
            max_attempts: 2000,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.constraints.validate()?;
        let bad = |m: &str| Err(Error::Config(format!("scene: {m}")));
        if !(self.min_height >= 1.5 && self.max_height <= 2.0 && self.min_height <= self.max_height)
        {
            return bad("person heights must lie within [1.5, 2.0] m");
        }
        if !(self.min_girth > 0.0 && self.min_girth <= self.max_girth) {
            return bad("girth range must be positive and ordered");
        }
        if !(self.background_depth > 0.0) {
            return bad("background depth must be positive");
        }
        if self.label_resolution == 0 || !self.hr_resolution.is_multiple_of(self.label_resolution) {
            return bad("hr_resolution must be a multiple of label_resolution");
        }
        if !(self.heatmap_sigma > 0.0 && self.paf_width > 0.0) {
            return bad("heatmap sigma and PAF width must be positive");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

/// Samples a scene with `persons` people whose joints all project inside `intrinsics`,
/// lie in front of the background, and whose pelvises are at least
/// `min_person_distance` apart. Rejection-samples up to `max_attempts` times.
pub fn sample_scene<R: Rng + ?Sized>(
    rng: &mut R,
    persons: usize,
    cfg: &SceneConfig,
    intrinsics: &Intrinsics,
) -> Result<Scene> {
    if !(1..=3).contains(&persons) {
        return Err(Error::Config(format!(
            "persons per frame must be 1, 2 or 3, got {persons}"
        )));
    }
    cfg.validate()?;
    let mut placed: Vec<Person> = Vec::with_capacity(persons);
    let mut attempts = 0;
    while placed.len() < persons {
        attempts += 1;
        if attempts > cfg.max_attempts {
            return Err(Error::Config(format!(
                "could not place {persons} persons inside the working volume in {} attempts",
                cfg.max_attempts
            )));
        }
        let height = rng.random_range(cfg.min_height..=cfg.max_height);
        let girth = rng.random_range(cfg.min_girth..=cfg.max_girth);
        let body = BodyShape::from_height(height, girth);
        let (pose, _) = sample_pose(rng, &cfg.constraints, &body)?;
        let in_volume = pose.joints.iter().all(|&p| {
            p[2] > 0.0
                && p[2] < cfg.background_depth - 0.05
                && intrinsics
                    .project(p)
                    .is_some_and(|(u, v)| intrinsics.contains(u, v))
        });
        if !in_volume {
            continue;
        }
        let pelvis = pose.pelvis();
        let clear = placed.iter().all(|other| {
            let q = other.pose.pelvis();
            (pelvis[0] - q[0]).hypot(pelvis[2] - q[2]) >= cfg.min_person_distance
        });
        if clear {
            placed.push(Person { body, pose });
        }
    }
    Ok(Scene {
        persons: placed,
        background_depth: Some(cfg.background_depth),
        body_reflectivity: cfg.body_reflectivity,
        background_reflectivity: cfg.background_reflectivity,
    })
}
