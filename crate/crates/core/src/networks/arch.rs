//! Layer layouts of the two networks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{Graph, Node, Parameter, Tensor};
use crate::scene::{NUM_JOINTS, NUM_LIMBS};

pub const HEATMAP_CHANNELS: usize = NUM_JOINTS;
pub const PAF_CHANNELS: usize = 2 * NUM_LIMBS;
/// Side of the depth map and of every pose map.
pub const MAP_SIZE: usize = 32;
/// Refinement stages after the first pose stage.
pub const REFINEMENT_STAGES: usize = 2;
const GLOBAL_WIDTH: usize = 384;
const STAGE_WIDTH: usize = 32;

/// A graph with the names and shapes of its parameters.
type Layout = (Graph, Vec<(String, Vec<usize>)>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Pixels2Depth,
    Depth2Pose,
}

/// Everything needed to rebuild a network's graph; serialized as the architecture id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchSpec {
    pub kind: Kind,
    /// Histogram bins per zone (Pixels2Depth input depth axis).
    pub n_bins: usize,
    /// Physical depth range in metres: clamp limit of predicted depth and the
    /// normalization divisor of Depth2Pose inputs.
    pub depth_range: f32,
}

impl ArchSpec {
    pub fn pixels2depth(n_bins: usize, depth_range: f32) -> Self {
        ArchSpec {
            kind: Kind::Pixels2Depth,
            n_bins,
            depth_range,
        }
    }

    pub fn depth2pose(depth_range: f32) -> Self {
        ArchSpec {
            kind: Kind::Depth2Pose,
            n_bins: 0,
            depth_range,
        }
    }

    pub fn id(&self) -> String {
        match self.kind {
            Kind::Pixels2Depth => format!(
                "pixels2depth-v1;bins={};range={}",
                self.n_bins, self.depth_range
            ),
            Kind::Depth2Pose => format!("depth2pose-v1;range={}", self.depth_range),
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        let bad = || {
            Error::Format(crate::FormatError::Malformed(format!(
                "unknown architecture id {id:?}"
            )))
        };
        let mut parts = id.split(';');
        let kind = match parts.next() {
            Some("pixels2depth-v1") => Kind::Pixels2Depth,
            Some("depth2pose-v1") => Kind::Depth2Pose,
            _ => return Err(bad()),
        };
        let (mut n_bins, mut range) = (None, None);
        for p in parts {
            match p.split_once('=') {
                Some(("bins", v)) => n_bins = Some(v.parse::<usize>().map_err(|_| bad())?),
                Some(("range", v)) => range = Some(v.parse::<f32>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let depth_range = range
            .filter(|r| r.is_finite() && *r > 0.0)
            .ok_or_else(bad)?;
        match kind {
            Kind::Pixels2Depth => Ok(ArchSpec::pixels2depth(n_bins.ok_or_else(bad)?, depth_range)),
            Kind::Depth2Pose if n_bins.is_none() => Ok(ArchSpec::depth2pose(depth_range)),
            Kind::Depth2Pose => Err(bad()),
        }
    }
}

/// Collects nodes and parameter shapes while a graph is laid out.
struct Builder {
    nodes: Vec<Node>,
    params: Vec<(String, Vec<usize>)>,
}

impl Builder {
    fn new(input: Vec<usize>) -> Self {
        Builder {
            nodes: vec![Node::Input { shape: input }],
            params: Vec::new(),
        }
    }

    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn param(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.params.push((name, shape));
        self.params.len() - 1
    }

    #[allow(clippy::too_many_arguments)]
    fn conv3d(
        &mut self,
        name: &str,
        input: usize,
        cin: usize,
        cout: usize,
        k: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> usize {
        let weight = self.param(format!("{name}.weight"), vec![cout, cin, k[0], k[1], k[2]]);
        let bias = self.param(format!("{name}.bias"), vec![cout]);
        self.push(Node::Conv {
            input,
            weight,
            bias,
            stride,
            pad,
            relu: true,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn conv2d(
        &mut self,
        name: &str,
        input: usize,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        relu: bool,
    ) -> usize {
        let weight = self.param(format!("{name}.weight"), vec![cout, cin, k, k]);
        let bias = self.param(format!("{name}.bias"), vec![cout]);
        self.push(Node::Conv {
            input,
            weight,
            bias,
            stride: [1, stride, stride],
            pad: [0, k / 2, k / 2],
            relu,
        })
    }

    /// Unpadded, stride-1 2D convolution with relu.
    fn conv2d_valid(
        &mut self,
        name: &str,
        input: usize,
        cin: usize,
        cout: usize,
        k: usize,
    ) -> usize {
        let weight = self.param(format!("{name}.weight"), vec![cout, cin, k, k]);
        let bias = self.param(format!("{name}.bias"), vec![cout]);
        self.push(Node::Conv {
            input,
            weight,
            bias,
            stride: [1; 3],
            pad: [0; 3],
            relu: true,
        })
    }

    fn finish(self, outputs: Vec<usize>) -> Layout {
        (
            Graph {
                nodes: self.nodes,
                outputs,
            },
            self.params,
        )
    }
}

/// Temporal length after a strided convolution.
fn conv_len(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

fn pixels2depth_layout(n_bins: usize) -> Result<Layout> {
    let t1 = conv_len(n_bins.max(1), 7, 4, 3);
    if n_bins < 8 || t1 + 4 < 7 {
        return Err(Error::Config(format!(
            "Pixels2Depth needs at least 8 histogram bins, got {n_bins}"
        )));
    }
    let t2 = conv_len(t1, 7, 4, 2);
    let mut b = Builder::new(vec![1, n_bins, 4, 4]);
    let x = b.conv3d("t1", 0, 1, 16, [7, 3, 3], [4, 1, 1], [3, 1, 1]);
    let x = b.conv3d("t2", x, 16, 32, [7, 3, 3], [4, 1, 1], [2, 1, 1]);
    // Collapse the remaining temporal extent in one step.
    let x = b.conv3d("t3", x, 32, 128, [t2, 3, 3], [1, 1, 1], [0, 1, 1]);
    let x = b.push(Node::Reshape {
        input: x,
        shape: vec![128, 4, 4],
    });
    let x = b.push(Node::Upsample2x { input: x });
    let x = b.conv2d("up8", x, 128, 64, 3, 1, true);
    let x = b.push(Node::Upsample2x { input: x });
    let x = b.conv2d("up16", x, 64, 48, 3, 1, true);
    let x = b.push(Node::Upsample2x { input: x });
    let x = b.conv2d("up32", x, 48, 24, 3, 1, true);
    let out = b.conv2d("depth", x, 24, 1, 1, 1, false);
    Ok(b.finish(vec![out]))
}

fn depth2pose_layout() -> Layout {
    let mut b = Builder::new(vec![1, MAP_SIZE, MAP_SIZE]);
    let e32 = b.conv2d("enc32", 0, 1, 16, 3, 1, true);
    let x = b.conv2d("enc16a", e32, 16, 32, 3, 2, true);
    let e16 = b.conv2d("enc16b", x, 32, 32, 3, 1, true);
    let x = b.conv2d("enc8a", e16, 32, 64, 3, 2, true);
    let e8 = b.conv2d("enc8b", x, 64, 64, 3, 1, true);
    let x = b.conv2d("enc4a", e8, 64, 128, 3, 2, true);
    let e4 = b.conv2d("enc4b", x, 128, 128, 3, 1, true);
    // Whole-image context: a 4x4 kernel over the 4x4 map acts as a dense layer.
    let g = b.conv2d_valid("global1", e4, 128, GLOBAL_WIDTH, 4);
    let g = b.conv2d("global2", g, GLOBAL_WIDTH, 128 * 16, 1, 1, true);
    let g = b.push(Node::Reshape {
        input: g,
        shape: vec![128, 4, 4],
    });
    let x = b.push(Node::Concat {
        inputs: vec![g, e4],
    });
    let x = b.conv2d("dec4", x, 256, 128, 3, 1, true);
    let x = b.push(Node::Upsample2x { input: x });
    let x = b.push(Node::Concat {
        inputs: vec![x, e8],
    });
    let x = b.conv2d("dec8", x, 192, 64, 3, 1, true);
    let x = b.push(Node::Upsample2x { input: x });
    let x = b.push(Node::Concat {
        inputs: vec![x, e16],
    });
    let x = b.conv2d("dec16", x, 96, 32, 3, 1, true);
    let x = b.push(Node::Upsample2x { input: x });
    let x = b.push(Node::Concat {
        inputs: vec![x, e32],
    });
    let features = b.conv2d("dec32", x, 48, STAGE_WIDTH, 3, 1, true);

    let mut outputs = Vec::new();
    let mut x = b.conv2d("stage0.a", features, STAGE_WIDTH, STAGE_WIDTH, 3, 1, true);
    for s in 0..=REFINEMENT_STAGES {
        if s > 0 {
            let (heat, paf) = (outputs[outputs.len() - 2], outputs[outputs.len() - 1]);
            let cat = b.push(Node::Concat {
                inputs: vec![features, heat, paf],
            });
            let width = STAGE_WIDTH + HEATMAP_CHANNELS + PAF_CHANNELS;
            x = b.conv2d(&format!("stage{s}.a"), cat, width, STAGE_WIDTH, 3, 1, true);
        }
        x = b.conv2d(
            &format!("stage{s}.b"),
            x,
            STAGE_WIDTH,
            STAGE_WIDTH,
            3,
            1,
            true,
        );
        outputs.push(b.conv2d(
            &format!("stage{s}.heat"),
            x,
            STAGE_WIDTH,
            HEATMAP_CHANNELS,
            1,
            1,
            false,
        ));
        outputs.push(b.conv2d(
            &format!("stage{s}.paf"),
            x,
            STAGE_WIDTH,
            PAF_CHANNELS,
            1,
            1,
            false,
        ));
    }
    b.finish(outputs)
}

/// Graph and named parameter shapes for `spec`.
pub fn layout(spec: &ArchSpec) -> Result<Layout> {
    match spec.kind {
        Kind::Pixels2Depth => pixels2depth_layout(spec.n_bins),
        Kind::Depth2Pose => Ok(depth2pose_layout()),
    }
}

/// Weight scale of the linear output heads relative to He init. Full-scale heads start
/// the pose network with a loss hundreds of times the trivial all-zero prediction, and the
/// first updates then silence most of the relu units.
const HEAD_GAIN: f64 = 0.05;

/// He-normal weights (scaled down for convolutions without relu) and zero biases from a
/// seeded stream.
pub fn init_params(graph: &Graph, shapes: &[(String, Vec<usize>)], seed: u64) -> Vec<Parameter> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads: Vec<usize> = graph
        .nodes
        .iter()
        .filter_map(|n| match n {
            Node::Conv {
                weight,
                relu: false,
                ..
            } => Some(*weight),
            _ => None,
        })
        .collect();
    shapes
        .iter()
        .enumerate()
        .map(|(i, (name, shape))| {
            let n: usize = shape.iter().product();
            let value = if shape.len() == 1 {
                Tensor::zeros(shape)
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let gain = if heads.contains(&i) { HEAD_GAIN } else { 1.0 };
                let std = gain * (2.0 / fan_in as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                let data = (0..n).map(|_| dist.sample(&mut rng) as f32).collect();
                Tensor::from_vec(shape, data).expect("length matches shape")
            };
            Parameter::new(name.clone(), value)
        })
        .collect()
}
