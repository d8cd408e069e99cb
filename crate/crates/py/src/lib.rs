//! Python module `pixels2pose`: configuration, dataset synthesis, model files, the full
//! inference pipeline, the decoder and the evaluation metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use ::pixels2pose as core;
use core::decode::{extract_peaks, DecodeConfig, Plane};
use core::metrics::{JointErrorRecord, JointGroup};
use core::networks::{load_model, StoredModel};
use core::pipeline::{self, Split};
use core::scene::dataset::{read_dataset, Dataset as CoreDataset};
use core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::File { .. } => PyIOError::new_err(e.to_string()),
        Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Config")]
struct Config {
    inner: core::config::PipelineConfig,
}

#[pymethods]
impl Config {
    /// Parses TOML text; an empty string gives the defaults.
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Config {
            inner: core::config::PipelineConfig::parse(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Config {
            inner: core::config::PipelineConfig::load(&path).map_err(py_err)?,
        })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }
}

#[pyclass(name = "Dataset")]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Dataset {
            inner: read_dataset(&path).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.frames.len()
    }

    #[getter]
    fn persons(&self) -> u32 {
        self.inner.persons
    }

    fn frame_ids(&self) -> Vec<u32> {
        self.inner.frames.iter().map(|f| f.frame_id).collect()
    }

    fn validation_ids(&self) -> Vec<u32> {
        self.inner.validation().map(|f| f.frame_id).collect()
    }

    /// Photon counts of frame `index`, zone-major: `grid_y * grid_x` lists of `n_bins` counts.
    fn histogram(&self, index: usize) -> PyResult<Vec<Vec<u16>>> {
        let f = self.frame(index)?;
        let h = &f.histogram;
        Ok(h.counts
            .chunks_exact(h.n_bins)
            .map(|c| c.to_vec())
            .collect())
    }

    /// Ground-truth 32x32 depth map of frame `index`, row-major.
    fn depth(&self, index: usize) -> PyResult<Vec<Vec<f32>>> {
        let d = &self.frame(index)?.labels.depth32;
        Ok(d.data.chunks_exact(d.width).map(|r| r.to_vec()).collect())
    }

    /// Ground-truth joints of frame `index`: per person, 14 `(x, y, z)` tuples in metres.
    fn joints3d(&self, index: usize) -> PyResult<Vec<Vec<(f32, f32, f32)>>> {
        Ok(self
            .frame(index)?
            .labels
            .joints3d
            .iter()
            .map(|p| p.iter().map(|j| (j[0], j[1], j[2])).collect())
            .collect())
    }
}

impl Dataset {
    fn frame(&self, index: usize) -> PyResult<&core::scene::dataset::Frame> {
        self.inner
            .frames
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("frame index {index} out of range")))
    }
}

/// Writes a synthetic dataset of `frames` frames and returns the generation rate (frames/s).
#[pyfunction]
fn synth(config: &Config, frames: usize, persons: usize, path: PathBuf) -> PyResult<f64> {
    Ok(pipeline::synth(&config.inner, frames, persons, &path)
        .map_err(py_err)?
        .fps())
}

/// Architecture id, parameter count and quantization flag of a model file.
#[pyfunction]
fn model_info(path: PathBuf) -> PyResult<(String, usize, bool)> {
    let stored = load_model(&path).map_err(py_err)?;
    let quantized = stored.is_quantized();
    let id = stored.spec().id();
    let count = match &stored {
        StoredModel::Float(m) => m.parameter_count(),
        StoredModel::Quantized(q) => q.parameter_count(),
    };
    Ok((id, count, quantized))
}

/// Quantizes a float model file and returns `(float_bytes, quantized_bytes)`.
#[pyfunction]
fn quantize(input: PathBuf, output: PathBuf) -> PyResult<(u64, u64)> {
    let s = pipeline::quantize_file(&input, &output).map_err(py_err)?;
    Ok((s.float_bytes, s.quantized_bytes))
}

type PersonJoints = Vec<(bool, f32, f32, f32)>;

#[pyclass(name = "Pipeline")]
struct Pipeline {
    inner: pipeline::Pipeline,
}

#[pymethods]
impl Pipeline {
    #[new]
    fn new(config: &Config, depth_model: PathBuf, pose_model: PathBuf) -> PyResult<Self> {
        Ok(Pipeline {
            inner: pipeline::Pipeline::load(&config.inner, &depth_model, &pose_model)
                .map_err(py_err)?,
        })
    }

    /// Runs every frame of `split` ("training", "validation" or "all") and returns, per frame,
    /// `(frame_id, persons)` with 14 `(valid, x, y, z)` joints per person.
    #[pyo3(signature = (dataset, split = "validation"))]
    fn run(&self, dataset: &Dataset, split: &str) -> PyResult<Vec<(u32, Vec<PersonJoints>)>> {
        let split: Split = split.parse().map_err(py_err)?;
        let frames = pipeline::select(&dataset.inner, split);
        let (poses, _) = pipeline::infer(&self.inner, &frames).map_err(py_err)?;
        Ok(poses
            .into_iter()
            .map(|f| {
                let persons = f
                    .persons
                    .iter()
                    .map(|s| s.joints.iter().map(|j| (j.valid, j.x, j.y, j.z)).collect())
                    .collect();
                (f.frame_id, persons)
            })
            .collect())
    }

    /// Runs the split and returns the evaluation table as text.
    #[pyo3(signature = (dataset, split = "validation"))]
    fn evaluate(&self, dataset: &Dataset, split: &str) -> PyResult<String> {
        let split: Split = split.parse().map_err(py_err)?;
        let frames = pipeline::select(&dataset.inner, split);
        let (poses, _) = pipeline::infer(&self.inner, &frames).map_err(py_err)?;
        let report = pipeline::evaluate(&poses, &dataset.inner).map_err(py_err)?;
        Ok(report.to_table())
    }
}

/// Heatmap peaks of a square map as `(u, v, score)`, strongest first.
#[pyfunction]
#[pyo3(signature = (heatmap, threshold = 0.1))]
fn peaks(heatmap: Vec<Vec<f32>>, threshold: f32) -> PyResult<Vec<(f32, f32, f32)>> {
    let size = heatmap.len();
    if size == 0 || heatmap.iter().any(|r| r.len() != size) {
        return Err(PyValueError::new_err("heatmap must be a non-empty square"));
    }
    let data: Vec<f32> = heatmap.into_iter().flatten().collect();
    let cfg = DecodeConfig {
        peak_threshold: threshold,
        ..DecodeConfig::default()
    };
    Ok(extract_peaks(Plane { size, data: &data }, 0, &cfg)
        .into_iter()
        .map(|k| (k.u, k.v, k.score))
        .collect())
}

fn records(errors: Vec<Option<(f64, f64, f64)>>) -> Vec<JointErrorRecord> {
    errors
        .into_iter()
        .map(|e| JointErrorRecord {
            frame_id: 0,
            group: JointGroup::Neck,
            error_cm: e.map(|(x, y, z)| [x, y, z]),
        })
        .collect()
}

/// Root mean squared error along `axis` (0, 1, 2) of per-joint errors in cm; `None` marks
/// a missed joint.
#[pyfunction]
fn rmse_axis(errors: Vec<Option<(f64, f64, f64)>>, axis: usize) -> PyResult<f64> {
    core::metrics::rmse_axis(&records(errors), axis).map_err(py_err)
}

#[pyfunction]
fn average_error(errors: Vec<Option<(f64, f64, f64)>>) -> PyResult<f64> {
    core::metrics::average_error(&records(errors)).map_err(py_err)
}

#[pyfunction]
fn pck(errors: Vec<Option<(f64, f64, f64)>>, tau_cm: f64) -> PyResult<f64> {
    core::metrics::pck(&records(errors), tau_cm).map_err(py_err)
}

#[pymodule]
fn pixels2pose(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(model_info, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(peaks, m)?)?;
    m.add_function(wrap_pyfunction!(rmse_axis, m)?)?;
    m.add_function(wrap_pyfunction!(average_error, m)?)?;
    m.add_function(wrap_pyfunction!(pck, m)?)?;
    Ok(())
}
