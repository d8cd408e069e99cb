//! Elementwise and resampling layers plus the regression loss.

use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Gradient of [`relu`]; zero wherever the input is `<= 0`, including exactly 0.
pub fn relu_backward<T: Float>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "relu gradient {:?} vs input {:?}",
            grad_out.shape(),
            x.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Source taps for one output coordinate of a 2x upsample (align_corners = false).
#[inline]
fn taps(o: usize, n_in: usize) -> (usize, usize, f64) {
    let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(n_in - 1);
    let i1 = (i0 + 1).min(n_in - 1);
    (i0, i1, src - i0 as f64)
}

fn upsample_dims<T: Float>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] if h > 0 && w > 0 => Ok((n * c, h, w)),
        _ => Err(Error::Shape(format!(
            "upsample expects a non-empty NxCxHxW tensor, got {:?}",
            x.shape()
        ))),
    }
}

/// Bilinear 2x upsampling of `N x C x H x W`.
pub fn upsample_bilinear_2x<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (planes, h, w) = upsample_dims(x)?;
    let (oh, ow) = (2 * h, 2 * w);
    let s = x.shape();
    let mut out = Tensor::zeros(&[s[0], s[1], oh, ow]);
    let rows: Vec<_> = (0..oh).map(|o| taps(o, h)).collect();
    let cols: Vec<_> = (0..ow).map(|o| taps(o, w)).collect();
    let src = x.data();
    let dst = out.data_mut();
    for p in 0..planes {
        let plane = &src[p * h * w..(p + 1) * h * w];
        let out_plane = &mut dst[p * oh * ow..(p + 1) * oh * ow];
        for (r, &(r0, r1, fr)) in rows.iter().enumerate() {
            let fr = T::from_f64(fr);
            for (c, &(c0, c1, fc)) in cols.iter().enumerate() {
                let fc = T::from_f64(fc);
                let top = plane[r0 * w + c0] * (T::ONE - fc) + plane[r0 * w + c1] * fc;
                let bot = plane[r1 * w + c0] * (T::ONE - fc) + plane[r1 * w + c1] * fc;
                out_plane[r * ow + c] = top * (T::ONE - fr) + bot * fr;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample_bilinear_2x`]: scatters each output gradient back to its taps.
pub fn upsample_bilinear_2x_backward<T: Float>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let probe = Tensor::<T>::zeros(input_shape);
    let (planes, h, w) = upsample_dims(&probe)?;
    let (oh, ow) = (2 * h, 2 * w);
    if grad_out.shape() != [input_shape[0], input_shape[1], oh, ow] {
        return Err(Error::Shape(format!(
            "upsample gradient {:?} does not match input {input_shape:?}",
            grad_out.shape()
        )));
    }
    let mut dx = probe;
    let rows: Vec<_> = (0..oh).map(|o| taps(o, h)).collect();
    let cols: Vec<_> = (0..ow).map(|o| taps(o, w)).collect();
    let g = grad_out.data();
    let d = dx.data_mut();
    for p in 0..planes {
        let gp = &g[p * oh * ow..(p + 1) * oh * ow];
        let dp = &mut d[p * h * w..(p + 1) * h * w];
        for (r, &(r0, r1, fr)) in rows.iter().enumerate() {
            let fr = T::from_f64(fr);
            for (c, &(c0, c1, fc)) in cols.iter().enumerate() {
                let fc = T::from_f64(fc);
                let v = gp[r * ow + c];
                let top = v * (T::ONE - fr);
                let bot = v * fr;
                dp[r0 * w + c0] += top * (T::ONE - fc);
                dp[r0 * w + c1] += top * fc;
                dp[r1 * w + c0] += bot * (T::ONE - fc);
                dp[r1 * w + c1] += bot * fc;
            }
        }
    }
    Ok(dx)
}

/// Concatenates `N x C_i x ...` tensors along the channel axis.
pub fn concat_channels<T: Float>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
    let n = first.shape()[0];
    let spatial = &first.shape()[2..];
    let mut channels = 0;
    for p in parts {
        if p.shape()[0] != n || &p.shape()[2..] != spatial {
            return Err(Error::Shape(format!(
                "cannot concat {:?} with {:?}",
                first.shape(),
                p.shape()
            )));
        }
        channels += p.shape()[1];
    }
    let mut shape = vec![n, channels];
    shape.extend_from_slice(spatial);
    let mut data = Vec::with_capacity(shape.iter().product());
    for s in 0..n {
        for p in parts {
            data.extend_from_slice(p.item(s));
        }
    }
    Tensor::from_vec(&shape, data)
}

/// Splits a channel-concatenated gradient back into per-part gradients.
pub fn split_channels<T: Float>(grad: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let n = grad.shape()[0];
    let spatial: usize = grad.shape()[2..].iter().product();
    if channels.iter().sum::<usize>() != grad.shape()[1] {
        return Err(Error::Shape(
            "channel split does not cover the tensor".into(),
        ));
    }
    let mut outs: Vec<Vec<T>> = channels
        .iter()
        .map(|c| Vec::with_capacity(n * c * spatial))
        .collect();
    for s in 0..n {
        let mut off = 0;
        let item = grad.item(s);
        for (o, &c) in outs.iter_mut().zip(channels) {
            o.extend_from_slice(&item[off * spatial..(off + c) * spatial]);
            off += c;
        }
    }
    outs.into_iter()
        .zip(channels)
        .map(|(d, &c)| {
            let mut shape = grad.shape().to_vec();
            shape[1] = c;
            Tensor::from_vec(&shape, d)
        })
        .collect()
}

/// Mean squared error over the entries where `mask` is non-zero (all entries without a
/// mask). Returns the loss and its gradient with respect to `prediction`.
pub fn mse_loss<T: Float>(
    prediction: &Tensor<T>,
    target: &Tensor<T>,
    mask: Option<&Tensor<T>>,
) -> Result<(T, Tensor<T>)> {
    if prediction.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    if let Some(m) = mask {
        if m.shape() != prediction.shape() {
            return Err(Error::Shape("mask shape differs from prediction".into()));
        }
    }
    let keep = |i: usize| mask.is_none_or(|m| m.data()[i] != T::ZERO);
    let count = (0..prediction.len()).filter(|&i| keep(i)).count();
    let mut grad = Tensor::zeros(prediction.shape());
    if count == 0 {
        return Ok((T::ZERO, grad));
    }
    let inv = T::ONE / T::from_f64(count as f64);
    let two = T::from_f64(2.0);
    let mut sum = T::ZERO;
    for (i, ((&p, &t), g)) in prediction
        .data()
        .iter()
        .zip(target.data())
        .zip(grad.data_mut())
        .enumerate()
    {
        if keep(i) {
            let d = p - t;
            sum += d * d;
            *g = two * d * inv;
        }
    }
    Ok((sum * inv, grad))
}
