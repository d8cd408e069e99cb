//! Fixed feed-forward graphs built from the layers in this module.
//!
//! Nodes are stored in topological order; every node refers only to earlier nodes, so a
//! forward pass is a single sweep and the backward pass is the reverse sweep.

use super::conv::{conv_backward, conv_forward, ConvGeometry};
use super::ops::{
    concat_channels, split_channels, upsample_bilinear_2x, upsample_bilinear_2x_backward,
};
use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    /// Per-sample shape of the network input.
    Input {
        shape: Vec<usize>,
    },
    /// 2D or 3D convolution (decided by the weight rank), optionally fused with relu.
    Conv {
        input: usize,
        weight: usize,
        bias: usize,
        stride: [usize; 3],
        pad: [usize; 3],
        relu: bool,
    },
    Upsample2x {
        input: usize,
    },
    Concat {
        inputs: Vec<usize>,
    },
    /// Reinterpret each sample with a new per-sample shape.
    Reshape {
        input: usize,
        shape: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub nodes: Vec<Node>,
    pub outputs: Vec<usize>,
}

/// Activations of every node from the most recent forward pass.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    pub values: Vec<Tensor<T>>,
}

/// Gradients of a backward pass, one per parameter tensor, plus the input gradient.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}

fn conv_geometry<T: Float>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Result<ConvGeometry> {
    let (xs, ws) = (x.shape(), w.shape());
    match (xs.len(), ws.len()) {
        (4, 4) if xs[1] == ws[1] => ConvGeometry::new(
            ws[1],
            ws[0],
            [1, xs[2], xs[3]],
            [1, ws[2], ws[3]],
            [1, stride[1], stride[2]],
            [0, pad[1], pad[2]],
        ),
        (5, 5) if xs[1] == ws[1] => ConvGeometry::new(
            ws[1],
            ws[0],
            [xs[2], xs[3], xs[4]],
            [ws[2], ws[3], ws[4]],
            stride,
            pad,
        ),
        _ => Err(Error::Shape(format!(
            "convolution input {xs:?} incompatible with weights {ws:?}"
        ))),
    }
}

impl Graph {
    pub fn input_shape(&self) -> &[usize] {
        match &self.nodes[0] {
            Node::Input { shape } => shape,
            _ => &[],
        }
    }

    /// Checks node references and parameter indices against `n_params`.
    pub fn validate(&self, n_params: usize) -> Result<()> {
        if !matches!(self.nodes.first(), Some(Node::Input { .. })) {
            return Err(Error::Shape("graph must start with its input node".into()));
        }
        for (i, node) in self.nodes.iter().enumerate().skip(1) {
            let refs: Vec<usize> = match node {
                Node::Input { .. } => {
                    return Err(Error::Shape("graph has more than one input".into()))
                }
                Node::Conv {
                    input,
                    weight,
                    bias,
                    ..
                } => {
                    if *weight >= n_params || *bias >= n_params {
                        return Err(Error::Shape(format!(
                            "node {i} references missing parameter"
                        )));
                    }
                    vec![*input]
                }
                Node::Upsample2x { input } | Node::Reshape { input, .. } => vec![*input],
                Node::Concat { inputs } => inputs.clone(),
            };
            if refs.iter().any(|&r| r >= i) {
                return Err(Error::Shape(format!(
                    "node {i} is not in topological order"
                )));
            }
        }
        if self.outputs.iter().any(|&o| o >= self.nodes.len()) {
            return Err(Error::Shape(
                "graph output references a missing node".into(),
            ));
        }
        Ok(())
    }

    pub fn forward<T: Float, P: AsRef<Tensor<T>>>(
        &self,
        params: &[P],
        input: Tensor<T>,
    ) -> Result<Activations<T>> {
        let expected = self.input_shape();
        if input.shape().len() != expected.len() + 1 || &input.shape()[1..] != expected {
            return Err(Error::Shape(format!(
                "network expects N x {expected:?} input, got {:?}",
                input.shape()
            )));
        }
        let n = input.shape()[0];
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        values.push(input);
        for node in &self.nodes[1..] {
            let out = match node {
                Node::Input { .. } => unreachable!("validated"),
                Node::Conv {
                    input,
                    weight,
                    bias,
                    stride,
                    pad,
                    relu,
                } => {
                    let x = &values[*input];
                    let g = conv_geometry(x, params[*weight].as_ref(), *stride, *pad)?;
                    let mut y =
                        conv_forward(x, params[*weight].as_ref(), params[*bias].as_ref(), &g);
                    if *relu {
                        y.data_mut().iter_mut().for_each(|v| {
                            if !(*v > T::ZERO) {
                                *v = T::ZERO
                            }
                        });
                    }
                    y
                }
                Node::Upsample2x { input } => upsample_bilinear_2x(&values[*input])?,
                Node::Concat { inputs } => {
                    let parts: Vec<&Tensor<T>> = inputs.iter().map(|&i| &values[i]).collect();
                    concat_channels(&parts)?
                }
                Node::Reshape { input, shape } => {
                    let mut full = vec![n];
                    full.extend_from_slice(shape);
                    values[*input].clone().reshape(&full)?
                }
            };
            values.push(out);
        }
        Ok(Activations { values })
    }

    /// Output tensors of a finished forward pass, in `outputs` order.
    pub fn outputs<'a, T: Float>(&self, acts: &'a Activations<T>) -> Vec<&'a Tensor<T>> {
        self.outputs.iter().map(|&o| &acts.values[o]).collect()
    }

    /// Reverse sweep given the loss gradient for each graph output (`None` = unused).
    pub fn backward<T: Float, P: AsRef<Tensor<T>>>(
        &self,
        params: &[P],
        acts: &Activations<T>,
        output_grads: Vec<Option<Tensor<T>>>,
    ) -> Result<Gradients<T>> {
        if output_grads.len() != self.outputs.len() {
            return Err(Error::Shape(
                "one gradient slot per graph output required".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        let accumulate =
            |grads: &mut Vec<Option<Tensor<T>>>, i: usize, g: Tensor<T>| -> Result<()> {
                match &mut grads[i] {
                    Some(existing) => existing.add_assign(&g),
                    slot => {
                        *slot = Some(g);
                        Ok(())
                    }
                }
            };
        for (&o, g) in self.outputs.iter().zip(output_grads) {
            if let Some(g) = g {
                if g.shape() != acts.values[o].shape() {
                    return Err(Error::Shape(format!(
                        "output gradient {:?} vs output {:?}",
                        g.shape(),
                        acts.values[o].shape()
                    )));
                }
                accumulate(&mut grads, o, g)?;
            }
        }
        let mut param_grads: Vec<Tensor<T>> = params
            .iter()
            .map(|p| Tensor::zeros(p.as_ref().shape()))
            .collect();
        for i in (1..self.nodes.len()).rev() {
            let Some(mut g) = grads[i].take() else {
                continue;
            };
            match &self.nodes[i] {
                Node::Input { .. } => unreachable!("validated"),
                Node::Conv {
                    input,
                    weight,
                    bias,
                    stride,
                    pad,
                    relu,
                } => {
                    if *relu {
                        for (gv, &y) in g.data_mut().iter_mut().zip(acts.values[i].data()) {
                            if !(y > T::ZERO) {
                                *gv = T::ZERO;
                            }
                        }
                    }
                    let x = &acts.values[*input];
                    let geo = conv_geometry(x, params[*weight].as_ref(), *stride, *pad)?;
                    let cg = conv_backward(x, params[*weight].as_ref(), &g, &geo, true);
                    param_grads[*weight].add_assign(&cg.weight)?;
                    param_grads[*bias].add_assign(&cg.bias)?;
                    if let Some(dx) = cg.input {
                        accumulate(&mut grads, *input, dx)?;
                    }
                }
                Node::Upsample2x { input } => {
                    let dx = upsample_bilinear_2x_backward(acts.values[*input].shape(), &g)?;
                    accumulate(&mut grads, *input, dx)?;
                }
                Node::Concat { inputs } => {
                    let channels: Vec<usize> =
                        inputs.iter().map(|&j| acts.values[j].shape()[1]).collect();
                    for (&j, part) in inputs.iter().zip(split_channels(&g, &channels)?) {
                        accumulate(&mut grads, j, part)?;
                    }
                }
                Node::Reshape { input, .. } => {
                    let dx = g.reshape(acts.values[*input].shape())?;
                    accumulate(&mut grads, *input, dx)?;
                }
            }
        }
        let input = grads[0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(acts.values[0].shape()));
        Ok(Gradients {
            params: param_grads,
            input,
        })
    }

    /// Multiply-accumulates of one forward pass for a single sample.
    pub fn macs<P: AsRef<Tensor<f32>>>(&self, params: &[P]) -> Result<usize> {
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        let mut total = 0;
        for node in &self.nodes {
            let shape = match node {
                Node::Input { shape } => {
                    let mut s = vec![1];
                    s.extend_from_slice(shape);
                    s
                }
                Node::Conv {
                    input,
                    weight,
                    stride,
                    pad,
                    ..
                } => {
                    let probe = Tensor::<f32>::zeros(&shapes[*input]);
                    let g = conv_geometry(&probe, params[*weight].as_ref(), *stride, *pad)?;
                    total += g.macs();
                    let mut s = vec![1, g.out_channels];
                    if shapes[*input].len() == 5 {
                        s.extend_from_slice(&g.output);
                    } else {
                        s.extend_from_slice(&g.output[1..]);
                    }
                    s
                }
                Node::Upsample2x { input } => {
                    let s = &shapes[*input];
                    vec![1, s[1], 2 * s[2], 2 * s[3]]
                }
                Node::Concat { inputs } => {
                    let mut s = shapes[inputs[0]].clone();
                    s[1] = inputs.iter().map(|&i| shapes[i][1]).sum();
                    s
                }
                Node::Reshape { shape, .. } => {
                    let mut s = vec![1];
                    s.extend_from_slice(shape);
                    s
                }
            };
            shapes.push(shape);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (Graph, Vec<Tensor<f64>>) {
        let graph = Graph {
            nodes: vec![
                Node::Input {
                    shape: vec![1, 2, 2],
                },
                Node::Conv {
                    input: 0,
                    weight: 0,
                    bias: 1,
                    stride: [1; 3],
                    pad: [0, 1, 1],
                    relu: true,
                },
                Node::Upsample2x { input: 1 },
                Node::Concat { inputs: vec![2, 2] },
            ],
            outputs: vec![3],
        };
        let w = Tensor::from_vec(
            &[2, 1, 3, 3],
            (0..18).map(|i| (i as f64 - 9.0) * 0.1).collect(),
        )
        .unwrap();
        let b = Tensor::from_vec(&[2], vec![0.05, -0.02]).unwrap();
        (graph, vec![w, b])
    }

    #[test]
    fn forward_shapes_and_validation() {
        let (g, p) = tiny();
        g.validate(p.len()).unwrap();
        let acts = g.forward(&p, Tensor::full(&[3, 1, 2, 2], 1.0)).unwrap();
        assert_eq!(g.outputs(&acts)[0].shape(), &[3, 4, 4, 4]);
        assert!(g.forward(&p, Tensor::zeros(&[3, 1, 3, 3])).is_err());
        assert!(g.validate(1).is_err());
    }

    #[test]
    fn fan_out_gradients_accumulate() {
        let (g, p) = tiny();
        let acts = g.forward(&p, Tensor::full(&[1, 1, 2, 2], 1.0)).unwrap();
        let ones = Tensor::full(&[1, 4, 4, 4], 1.0);
        let gr = g.backward(&p, &acts, vec![Some(ones)]).unwrap();
        // The concat duplicates the upsampled map, so every path is counted twice; bias
        // gradient of an active channel is 2 * (16 output pixels spread over 4 inputs * 4).
        let b = gr.params[1].data();
        for (c, &v) in b.iter().enumerate() {
            let active = acts.values[1].data()[c * 4..(c + 1) * 4]
                .iter()
                .filter(|&&y| y > 0.0)
                .count();
            assert!(
                (v - 2.0 * 4.0 * active as f64).abs() < 1e-12,
                "{v} {active}"
            );
        }
    }
}
