//! Per-tensor affine int8 weight quantization.

use super::arch::ArchSpec;
use super::model::Model;
use crate::error::Result;
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub scale: f32,
    pub zero_point: i32,
    pub data: Vec<i8>,
}

impl QuantizedTensor {
    /// `scale * (q - zero_point)` for every element.
    pub fn dequantize(&self) -> Tensor {
        let data = self
            .data
            .iter()
            .map(|&q| self.scale * (q as i32 - self.zero_point) as f32)
            .collect();
        Tensor::from_vec(&self.shape, data).expect("shape recorded with the data")
    }
}

/// Quantizes one tensor: `scale = (max - min) / 255`, `zero_point = round(-min / scale) - 128`.
/// A constant tensor of value `v` uses `scale = |v|` (1 for zero), `zero_point = 0` and
/// `q = sign(v)`, which round-trips exactly.
pub fn quantize_tensor(name: &str, t: &Tensor) -> QuantizedTensor {
    let (min, max) = t
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let (scale, zero_point, data) = if t.is_empty() || max == min {
        let v = if t.is_empty() { 0.0 } else { min };
        let scale = if v == 0.0 { 1.0 } else { v.abs() };
        let q = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        };
        (scale, 0, vec![q; t.len()])
    } else {
        let scale = (max - min) / 255.0;
        let zp = ((-min / scale).round() as i32 - 128).clamp(-128, 127);
        let data = t
            .data()
            .iter()
            .map(|&v| ((v / scale).round() as i32 + zp).clamp(-128, 127) as i8)
            .collect();
        (scale, zp, data)
    };
    QuantizedTensor {
        name: name.to_string(),
        shape: t.shape().to_vec(),
        scale,
        zero_point,
        data,
    }
}

/// A network whose parameters are stored as int8; inference runs on the dequantized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub spec: ArchSpec,
    pub tensors: Vec<QuantizedTensor>,
}

impl QuantizedModel {
    pub fn dequantize(&self) -> Result<Model> {
        Model::from_tensors(
            self.spec,
            self.tensors
                .iter()
                .map(|t| (t.name.clone(), t.dequantize()))
                .collect(),
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }
}

pub fn quantize_weights(model: &Model) -> QuantizedModel {
    QuantizedModel {
        spec: model.spec,
        tensors: model
            .params
            .iter()
            .map(|p| quantize_tensor(&p.name, &p.value))
            .collect(),
    }
}
