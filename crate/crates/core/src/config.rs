//! Pipeline configuration: a TOML file with one table per stage. Unknown keys are rejected
//! and every key has a default, so an empty file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decode::DecodeConfig;
use crate::error::{Error, Result};
use crate::networks::TrainConfig;
use crate::scene::skeleton::PoseConstraints;
use crate::scene::SceneConfig;
use crate::sensor::SensorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub sensor: SensorSection,
    pub scene: SceneSection,
    pub data: DataSection,
    pub depth_training: TrainSection,
    pub pose_training: TrainSection,
    pub decode: DecodeSection,
    pub paths: PathsSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            sensor: SensorSection::default(),
            scene: SceneSection::default(),
            data: DataSection::default(),
            depth_training: TrainSection {
                epochs: 12,
                ..TrainSection::default()
            },
            pose_training: TrainSection::default(),
            decode: DecodeSection::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub grid_x: usize,
    pub grid_y: usize,
    pub n_bins_raw: usize,
    pub n_bins_crop: usize,
    pub bin_duration_ps: f64,
    pub fov_diagonal_deg: f64,
    pub max_range_m: f64,
    pub pulse_fwhm_bins: f64,
    pub signal_photons: f64,
    pub ambient_rate: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        let s = SensorConfig::default();
        SensorSection {
            grid_x: s.grid_x,
            grid_y: s.grid_y,
            n_bins_raw: s.n_bins_raw,
            n_bins_crop: s.n_bins_crop,
            // Covers the whole working volume (0.3 m to 3 m) within the cropped bins.
            bin_duration_ps: 200.0,
            fov_diagonal_deg: s.fov_diagonal_deg,
            max_range_m: s.max_range_m,
            pulse_fwhm_bins: s.pulse_fwhm_bins,
            signal_photons: 2000.0,
            ambient_rate: s.ambient_rate,
        }
    }
}

/// Angles in degrees, lengths in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub yaw_deg: [f64; 2],
    pub lean_deg: [f64; 2],
    pub head_pitch_deg: [f64; 2],
    pub arm_elevation_deg: [f64; 2],
    pub arm_swing_deg: [f64; 2],
    pub elbow_flex_deg: [f64; 2],
    pub hip_flex_deg: [f64; 2],
    pub hip_abduction_deg: [f64; 2],
    pub knee_flex_deg: [f64; 2],
    pub root_x: [f64; 2],
    pub root_z: [f64; 2],
    pub camera_height: f64,
    pub min_height: f64,
    pub max_height: f64,
    pub min_girth: f64,
    pub max_girth: f64,
    pub background_depth: f64,
    pub body_reflectivity: f32,
    pub background_reflectivity: f32,
    pub min_person_distance: f64,
    pub hr_resolution: usize,
    pub heatmap_sigma: f64,
    pub paf_width: f64,
    pub max_attempts: usize,
}

fn deg_range(r: (f64, f64)) -> [f64; 2] {
    [r.0.to_degrees(), r.1.to_degrees()]
}

fn rad_range(r: [f64; 2]) -> (f64, f64) {
    (r[0].to_radians(), r[1].to_radians())
}

impl Default for SceneSection {
    fn default() -> Self {
        let s = SceneConfig::default();
        let c = &s.constraints;
        SceneSection {
            yaw_deg: deg_range(c.yaw),
            lean_deg: deg_range(c.lean),
            head_pitch_deg: deg_range(c.head_pitch),
            arm_elevation_deg: deg_range(c.arm_elevation),
            arm_swing_deg: deg_range(c.arm_swing),
            elbow_flex_deg: deg_range(c.elbow_flex),
            hip_flex_deg: deg_range(c.hip_flex),
            hip_abduction_deg: deg_range(c.hip_abduction),
            knee_flex_deg: deg_range(c.knee_flex),
            root_x: [c.root_x.0, c.root_x.1],
            root_z: [c.root_z.0, c.root_z.1],
            camera_height: c.camera_height,
            min_height: s.min_height,
            max_height: s.max_height,
            min_girth: s.min_girth,
            max_girth: s.max_girth,
            background_depth: s.background_depth,
            body_reflectivity: s.body_reflectivity,
            background_reflectivity: s.background_reflectivity,
            min_person_distance: s.min_person_distance,
            hr_resolution: s.hr_resolution,
            heatmap_sigma: s.heatmap_sigma,
            paf_width: s.paf_width,
            max_attempts: s.max_attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub persons: usize,
    pub train_frames: usize,
    pub validation_frames: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            persons: 1,
            train_frames: 2000,
            validation_frames: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub depth_weight: f32,
    pub heatmap_weight: f32,
    pub paf_weight: f32,
    pub lr_decay: f32,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: 12,
            depth_weight: t.depth_weight,
            heatmap_weight: t.heatmap_weight,
            paf_weight: t.paf_weight,
            lr_decay: t.lr_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub peak_threshold: f32,
    pub max_peaks: usize,
    pub paf_samples: usize,
    pub paf_min_aligned: usize,
    pub paf_min_dot: f32,
    pub min_joints: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        let d = DecodeConfig::default();
        DecodeSection {
            peak_threshold: d.peak_threshold,
            max_peaks: d.max_peaks,
            paf_samples: d.paf_samples,
            paf_min_aligned: d.paf_min_aligned,
            paf_min_dot: d.paf_min_dot,
            min_joints: d.min_joints,
        }
    }
}

/// File names used inside the output directory when a command is not given explicit paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub dataset: String,
    pub depth_model: String,
    pub pose_model: String,
    pub predictions: String,
    pub report: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            dataset: "dataset.p2pd".into(),
            depth_model: "depth.p2pw".into(),
            pose_model: "pose.p2pw".into(),
            predictions: "predictions.jsonl".into(),
            report: "report.txt".into(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    /// The fully populated default configuration as TOML.
    pub fn reference() -> String {
        toml::to_string(&PipelineConfig::default()).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor_config().validate()?;
        self.scene_config().validate()?;
        if !(1..=3).contains(&self.data.persons) {
            return Err(Error::Config(format!(
                "data.persons must be 1, 2 or 3, got {}",
                self.data.persons
            )));
        }
        self.train_config(&self.depth_training, 0).validate()?;
        self.train_config(&self.pose_training, 0).validate()?;
        let d = self.decode_config();
        if !(d.peak_threshold.is_finite() && d.paf_min_dot.is_finite())
            || d.max_peaks == 0
            || d.paf_samples < 2
            || d.paf_min_aligned > d.paf_samples
        {
            return Err(Error::Config(format!(
                "decode: inconsistent settings {d:?}"
            )));
        }
        Ok(())
    }

    pub fn sensor_config(&self) -> SensorConfig {
        let s = &self.sensor;
        SensorConfig {
            grid_x: s.grid_x,
            grid_y: s.grid_y,
            n_bins_raw: s.n_bins_raw,
            n_bins_crop: s.n_bins_crop,
            bin_duration_ps: s.bin_duration_ps,
            fov_diagonal_deg: s.fov_diagonal_deg,
            max_range_m: s.max_range_m,
            pulse_fwhm_bins: s.pulse_fwhm_bins,
            signal_photons: s.signal_photons,
            ambient_rate: s.ambient_rate,
            rng_seed: self.seed,
        }
    }

    pub fn scene_config(&self) -> SceneConfig {
        let s = &self.scene;
        SceneConfig {
            constraints: PoseConstraints {
                yaw: rad_range(s.yaw_deg),
                lean: rad_range(s.lean_deg),
                head_pitch: rad_range(s.head_pitch_deg),
                arm_elevation: rad_range(s.arm_elevation_deg),
                arm_swing: rad_range(s.arm_swing_deg),
                elbow_flex: rad_range(s.elbow_flex_deg),
                hip_flex: rad_range(s.hip_flex_deg),
                hip_abduction: rad_range(s.hip_abduction_deg),
                knee_flex: rad_range(s.knee_flex_deg),
                root_x: (s.root_x[0], s.root_x[1]),
                root_z: (s.root_z[0], s.root_z[1]),
                camera_height: s.camera_height,
            },
            min_height: s.min_height,
            max_height: s.max_height,
            min_girth: s.min_girth,
            max_girth: s.max_girth,
            background_depth: s.background_depth,
            body_reflectivity: s.body_reflectivity,
            background_reflectivity: s.background_reflectivity,
            min_person_distance: s.min_person_distance,
            hr_resolution: s.hr_resolution,
            label_resolution: crate::networks::MAP_SIZE,
            heatmap_sigma: s.heatmap_sigma,
            paf_width: s.paf_width,
            max_attempts: s.max_attempts,
        }
    }

    pub fn train_config(&self, section: &TrainSection, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: section.learning_rate,
            batch_size: section.batch_size,
            epochs: section.epochs,
            depth_weight: section.depth_weight,
            heatmap_weight: section.heatmap_weight,
            paf_weight: section.paf_weight,
            lr_decay: section.lr_decay,
            seed,
        }
    }

    pub fn decode_config(&self) -> DecodeConfig {
        let d = &self.decode;
        DecodeConfig {
            peak_threshold: d.peak_threshold,
            max_peaks: d.max_peaks,
            paf_samples: d.paf_samples,
            paf_min_aligned: d.paf_min_aligned,
            paf_min_dot: d.paf_min_dot,
            min_joints: d.min_joints,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips() {
        let text = PipelineConfig::reference();
        assert_eq!(
            PipelineConfig::parse(&text).unwrap(),
            PipelineConfig::default()
        );
        assert_eq!(
            PipelineConfig::parse("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            PipelineConfig::parse("sede = 3"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PipelineConfig::parse("[sensor]\nbins = 3"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn partial_file_overrides_defaults() {
        let c = PipelineConfig::parse("seed = 11\n[data]\npersons = 2\n").unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.data.persons, 2);
        assert_eq!(c.data.train_frames, 2000);
        assert!(PipelineConfig::parse("[data]\npersons = 4\n").is_err());
    }
}
