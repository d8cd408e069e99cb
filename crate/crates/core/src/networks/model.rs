use super::arch::{init_params, layout, ArchSpec, Kind, HEATMAP_CHANNELS, MAP_SIZE, PAF_CHANNELS};
use crate::error::{Error, Result};
use crate::map::Map;
use crate::nn::{Graph, Parameter, Tensor};
use crate::sensor::{Histogram, SensorConfig};

/// A network: its architecture, graph and trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ArchSpec,
    pub graph: Graph,
    pub params: Vec<Parameter>,
}

impl Model {
    /// Fresh network with seeded He-normal weights.
    pub fn new(spec: ArchSpec, seed: u64) -> Result<Self> {
        let (graph, shapes) = layout(&spec)?;
        let params = init_params(&graph, &shapes, seed);
        graph.validate(params.len())?;
        Ok(Model {
            spec,
            graph,
            params,
        })
    }

    /// Rebuilds a network from stored tensors, which must match the layout by name and shape.
    pub fn from_tensors(spec: ArchSpec, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let (graph, shapes) = layout(&spec)?;
        if tensors.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "{} expects {} tensors, got {}",
                spec.id(),
                shapes.len(),
                tensors.len()
            )));
        }
        let mut params = Vec::with_capacity(shapes.len());
        for ((name, shape), (got_name, value)) in shapes.into_iter().zip(tensors) {
            if name != got_name || shape != value.shape() {
                return Err(Error::Shape(format!(
                    "expected tensor {name} {shape:?}, got {got_name} {:?}",
                    value.shape()
                )));
            }
            params.push(Parameter::new(name, value));
        }
        Ok(Model {
            spec,
            graph,
            params,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Multiply-accumulates of one single-frame forward pass.
    pub fn macs(&self) -> usize {
        self.graph
            .macs(&self.params)
            .expect("layout validated on construction")
    }

    /// Sets the bias of the final depth layer, e.g. to the mean training depth.
    pub fn set_depth_bias(&mut self, depth: f32) -> Result<()> {
        if self.spec.kind != Kind::Pixels2Depth {
            return Err(Error::Config("only Pixels2Depth has a depth head".into()));
        }
        let bias = self
            .params
            .iter_mut()
            .find(|p| p.name == "depth.bias")
            .expect("Pixels2Depth layout has a depth head");
        bias.value.fill(depth);
        Ok(())
    }

    /// Forward pass returning the graph outputs.
    pub fn forward(&self, input: Tensor) -> Result<Vec<Tensor>> {
        let acts = self.graph.forward(&self.params, input)?;
        let mut values = acts.values;
        let mut outs = Vec::with_capacity(self.graph.outputs.len());
        for &o in &self.graph.outputs {
            outs.push(std::mem::replace(&mut values[o], Tensor::zeros(&[0])));
        }
        for (o, t) in outs.iter().enumerate() {
            if !t.all_finite() {
                return Err(Error::Numeric(format!("non-finite value in output {o}")));
            }
        }
        Ok(outs)
    }
}

/// Fresh Pixels2Depth network for the cropped histograms of `sensor`.
pub fn build_pixels2depth(sensor: &SensorConfig, seed: u64) -> Result<Model> {
    if sensor.grid_x != 4 || sensor.grid_y != 4 {
        return Err(Error::Config(format!(
            "Pixels2Depth expects a 4x4 zone grid, got {}x{}",
            sensor.grid_x, sensor.grid_y
        )));
    }
    let range = (sensor.n_bins_crop as f64 * sensor.bin_depth()) as f32;
    Model::new(ArchSpec::pixels2depth(sensor.n_bins_crop, range), seed)
}

/// Fresh Depth2Pose network for depth maps spanning `[0, depth_range]` metres.
pub fn build_depth2pose(depth_range: f32, seed: u64) -> Result<Model> {
    Model::new(ArchSpec::depth2pose(depth_range), seed)
}

/// Network input for one histogram: counts over the per-frame maximum, laid out
/// `bins x grid_y x grid_x`.
pub fn histogram_input(h: &Histogram) -> Vec<f32> {
    let max = h.max_count();
    let scale = if max > 0 { 1.0 / max as f32 } else { 0.0 };
    let zones = h.grid_x * h.grid_y;
    let mut out = vec![0.0; h.n_bins * zones];
    for (z, counts) in h.counts.chunks_exact(h.n_bins).enumerate() {
        for (b, &c) in counts.iter().enumerate() {
            out[b * zones + z] = c as f32 * scale;
        }
    }
    out
}

/// Network input for one depth map: metres over the depth range.
pub fn depth_input(d: &Map, depth_range: f32) -> Vec<f32> {
    d.data.iter().map(|&v| v / depth_range).collect()
}

fn check_kind(model: &Model, kind: Kind) -> Result<()> {
    if model.spec.kind != kind {
        return Err(Error::Config(format!(
            "model {} cannot run this stage",
            model.spec.id()
        )));
    }
    Ok(())
}

/// Depth maps for a batch of histograms, clamped to the physical range.
pub fn infer_depth_batch(model: &Model, hs: &[&Histogram]) -> Result<Vec<Map>> {
    check_kind(model, Kind::Pixels2Depth)?;
    let mut data = Vec::new();
    for h in hs {
        if h.n_bins != model.spec.n_bins || h.grid_x != 4 || h.grid_y != 4 {
            return Err(Error::Shape(format!(
                "histogram {}x{}x{} does not match model input 4x4x{}",
                h.grid_x, h.grid_y, h.n_bins, model.spec.n_bins
            )));
        }
        data.extend(histogram_input(h));
    }
    let input = Tensor::from_vec(&[hs.len(), 1, model.spec.n_bins, 4, 4], data)?;
    let out = model.forward(input)?.swap_remove(0);
    let range = model.spec.depth_range;
    Ok((0..hs.len())
        .map(|i| {
            let d = out.item(i).iter().map(|v| v.clamp(0.0, range)).collect();
            Map::from_vec(MAP_SIZE, MAP_SIZE, d)
        })
        .collect())
}

pub fn infer_depth(model: &Model, h: &Histogram) -> Result<Map> {
    Ok(infer_depth_batch(model, &[h])?.swap_remove(0))
}

/// Final-stage confidence maps and part affinity fields for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseMaps {
    pub resolution: usize,
    /// `HEATMAP_CHANNELS` maps, channel-major.
    pub heatmaps: Vec<f32>,
    /// `PAF_CHANNELS` maps, channel-major.
    pub pafs: Vec<f32>,
}

impl PoseMaps {
    pub fn heatmap(&self, joint: usize) -> &[f32] {
        let n = self.resolution * self.resolution;
        &self.heatmaps[joint * n..(joint + 1) * n]
    }

    pub fn paf(&self, channel: usize) -> &[f32] {
        let n = self.resolution * self.resolution;
        &self.pafs[channel * n..(channel + 1) * n]
    }
}

pub fn infer_pose_maps_batch(model: &Model, ds: &[&Map]) -> Result<Vec<PoseMaps>> {
    check_kind(model, Kind::Depth2Pose)?;
    let mut data = Vec::new();
    for d in ds {
        if d.width != MAP_SIZE || d.height != MAP_SIZE {
            return Err(Error::Shape(format!(
                "depth map {}x{} does not match model input {MAP_SIZE}x{MAP_SIZE}",
                d.width, d.height
            )));
        }
        data.extend(depth_input(d, model.spec.depth_range));
    }
    let input = Tensor::from_vec(&[ds.len(), 1, MAP_SIZE, MAP_SIZE], data)?;
    let mut outs = model.forward(input)?;
    let pafs = outs.pop().expect("pose graph has outputs");
    let heat = outs.pop().expect("pose graph has outputs");
    debug_assert_eq!(heat.shape()[1], HEATMAP_CHANNELS);
    debug_assert_eq!(pafs.shape()[1], PAF_CHANNELS);
    Ok((0..ds.len())
        .map(|i| PoseMaps {
            resolution: MAP_SIZE,
            heatmaps: heat.item(i).to_vec(),
            pafs: pafs.item(i).to_vec(),
        })
        .collect())
}

pub fn infer_pose_maps(model: &Model, d: &Map) -> Result<PoseMaps> {
    Ok(infer_pose_maps_batch(model, &[d])?.swap_remove(0))
}
