//! The `P2PW` model file.
//!
//! ```text
//! magic "P2PW" | version u32 | arch_id_len u32 | arch_id utf-8 | tensor_count u32
//! per tensor: name_len u32 | name utf-8 | dtype u8 (0 = f32, 1 = i8) | rank u32 | dims u32[rank]
//!             i8 only: scale f32 | zero_point i32
//!             data: f32[n] or i8[n]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::arch::ArchSpec;
use super::model::Model;
use super::quant::{QuantizedModel, QuantizedTensor};
use crate::error::{Error, FormatError, Result};
use crate::io::{LeReader, LeWriter};
use crate::nn::Tensor;

pub const MODEL_MAGIC: [u8; 4] = *b"P2PW";
pub const MODEL_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const DTYPE_I8: u8 = 1;
const MAX_RANK: usize = 8;
const MAX_NAME: usize = 256;

/// Contents of a model file of either precision.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Float(Model),
    Quantized(QuantizedModel),
}

impl StoredModel {
    pub fn spec(&self) -> ArchSpec {
        match self {
            StoredModel::Float(m) => m.spec,
            StoredModel::Quantized(q) => q.spec,
        }
    }

    /// The float network, dequantizing if needed.
    pub fn into_model(self) -> Result<Model> {
        match self {
            StoredModel::Float(m) => Ok(m),
            StoredModel::Quantized(q) => q.dequantize(),
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, StoredModel::Quantized(_))
    }
}

fn header<W: Write>(w: &mut LeWriter<W>, spec: &ArchSpec, count: usize) -> std::io::Result<()> {
    let id = spec.id();
    w.bytes(&MODEL_MAGIC)?;
    w.u32(MODEL_VERSION)?;
    w.u32(id.len() as u32)?;
    w.bytes(id.as_bytes())?;
    w.u32(count as u32)
}

fn tensor_head<W: Write>(
    w: &mut LeWriter<W>,
    name: &str,
    dtype: u8,
    shape: &[usize],
) -> std::io::Result<()> {
    w.u32(name.len() as u32)?;
    w.bytes(name.as_bytes())?;
    w.u8(dtype)?;
    w.u32(shape.len() as u32)?;
    for &d in shape {
        w.u32(d as u32)?;
    }
    Ok(())
}

pub fn encode_model<W: Write>(model: &StoredModel, out: W) -> std::io::Result<W> {
    let mut w = LeWriter::new(out);
    match model {
        StoredModel::Float(m) => {
            header(&mut w, &m.spec, m.params.len())?;
            for p in &m.params {
                tensor_head(&mut w, &p.name, DTYPE_F32, p.value.shape())?;
                w.f32_slice(p.value.data())?;
            }
        }
        StoredModel::Quantized(q) => {
            header(&mut w, &q.spec, q.tensors.len())?;
            for t in &q.tensors {
                tensor_head(&mut w, &t.name, DTYPE_I8, &t.shape)?;
                w.f32(t.scale)?;
                w.i32(t.zero_point)?;
                let bytes: Vec<u8> = t.data.iter().map(|&v| v as u8).collect();
                w.bytes(&bytes)?;
            }
        }
    }
    Ok(w.into_inner())
}

fn malformed(msg: String) -> Error {
    FormatError::Malformed(msg).into()
}

fn string<R: Read>(r: &mut LeReader<R>, max: usize, what: &str) -> Result<String> {
    let n = r.u32(what)? as usize;
    if n > max {
        return Err(malformed(format!("{what} length {n} exceeds {max}")));
    }
    String::from_utf8(r.bytes_vec(n, what)?).map_err(|_| malformed(format!("{what} is not utf-8")))
}

pub fn decode_model<R: Read>(input: R) -> Result<StoredModel> {
    let mut r = LeReader::new(input);
    r.magic(MODEL_MAGIC)?;
    r.version(MODEL_VERSION)?;
    let spec = ArchSpec::parse(&string(&mut r, 1024, "architecture id")?)?;
    let count = r.u32("tensor count")? as usize;
    let mut floats = Vec::new();
    let mut quants = Vec::new();
    let mut dtype_seen = None;
    for _ in 0..count {
        let name = string(&mut r, MAX_NAME, "tensor name")?;
        let dtype = r.u8("dtype")?;
        if *dtype_seen.get_or_insert(dtype) != dtype {
            return Err(malformed(format!(
                "tensor {name} mixes dtypes within one file"
            )));
        }
        let rank = r.u32("rank")? as usize;
        if rank > MAX_RANK {
            return Err(malformed(format!("tensor {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| malformed(format!("tensor {name} is too large: {shape:?}")))?;
        match dtype {
            DTYPE_F32 => {
                let data = r.f32_vec(n, "tensor data")?;
                floats.push((name, Tensor::from_vec(&shape, data)?));
            }
            DTYPE_I8 => {
                let scale = r.f32("scale")?;
                let zero_point = r.i32("zero point")?;
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(malformed(format!("tensor {name} has scale {scale}")));
                }
                let data = r
                    .bytes_vec(n, "tensor data")?
                    .into_iter()
                    .map(|b| b as i8)
                    .collect();
                quants.push(QuantizedTensor {
                    name,
                    shape,
                    scale,
                    zero_point,
                    data,
                });
            }
            other => return Err(malformed(format!("unknown dtype tag {other}"))),
        }
    }
    r.expect_end()?;
    let shape_err = |e: Error| match e {
        Error::Shape(m) => malformed(m),
        e => e,
    };
    if dtype_seen == Some(DTYPE_I8) {
        let q = QuantizedModel {
            spec,
            tensors: quants,
        };
        // Checks names and shapes against the layout.
        q.dequantize().map_err(shape_err)?;
        Ok(StoredModel::Quantized(q))
    } else {
        Ok(StoredModel::Float(
            Model::from_tensors(spec, floats).map_err(shape_err)?,
        ))
    }
}

pub fn save_model(model: &StoredModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = encode_model(model, BufWriter::new(file)).map_err(|e| Error::file(path, e))?;
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn load_model(path: &Path) -> Result<StoredModel> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    decode_model(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{build_depth2pose, quantize_weights};

    fn bytes(m: &StoredModel) -> Vec<u8> {
        encode_model(m, Vec::new()).unwrap()
    }

    #[test]
    fn float_and_quantized_round_trip() {
        let m = build_depth2pose(4.0, 3).unwrap();
        let q = StoredModel::Quantized(quantize_weights(&m));
        let f = StoredModel::Float(m);
        for s in [f, q] {
            let b = bytes(&s);
            let back = decode_model(&b[..]).unwrap();
            assert_eq!(back, s);
            assert_eq!(bytes(&back), b);
        }
    }

    #[test]
    fn corrupt_files_give_distinct_errors() {
        let b = bytes(&StoredModel::Float(build_depth2pose(4.0, 3).unwrap()));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_model(&bad[..]),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
        let mut bad = b.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_model(&bad[..]),
            Err(Error::Format(FormatError::UnsupportedVersion {
                found: 9,
                ..
            }))
        ));
        assert!(matches!(
            decode_model(&b[..b.len() - 3]),
            Err(Error::Format(FormatError::Truncated(_)))
        ));
    }
}
