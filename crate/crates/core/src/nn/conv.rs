//! 2D and 3D cross-correlation via im2col + GEMM.
//!
//! A 2D convolution is treated as a 3D one with a unit depth axis, so both share one
//! kernel. Accumulation order is fixed (samples in order, one GEMM per sample), which
//! keeps results bit-reproducible for a given build.

use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

/// Spatial geometry of one convolution, always expressed in 3D (depth, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeometry {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        input: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        let mut output = [0; 3];
        for a in 0..3 {
            if stride[a] == 0 {
                return Err(Error::Shape("stride must be at least 1".into()));
            }
            let padded = input[a] + 2 * pad[a];
            if kernel[a] == 0 || kernel[a] > padded {
                return Err(Error::Shape(format!(
                    "kernel {:?} does not fit padded input {:?} (pad {:?})",
                    kernel, input, pad
                )));
            }
            output[a] = (padded - kernel[a]) / stride[a] + 1;
        }
        Ok(ConvGeometry {
            in_channels,
            out_channels,
            input,
            kernel,
            stride,
            pad,
            output,
        })
    }

    /// Rows of the im2col matrix: `C * kd * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    /// Columns of the im2col matrix: output positions per sample.
    pub fn positions(&self) -> usize {
        self.output.iter().product()
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.input.iter().product::<usize>()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.pad == [0, 0, 0]
    }

    /// Multiply-accumulate count of the forward pass for one sample.
    pub fn macs(&self) -> usize {
        self.out_channels * self.patch_len() * self.positions()
    }
}

/// Gradients of a convolution with respect to its input, weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Output indices `[lo, hi)` whose tap `k` lands inside an input axis of length `n_in`.
#[inline]
fn valid_range(k: usize, pad: usize, stride: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    // i = o * stride + k - pad must satisfy 0 <= i < n_in.
    let lo = if pad > k {
        (pad - k).div_ceil(stride)
    } else {
        0
    };
    let hi = if n_in + pad > k {
        ((n_in + pad - k - 1) / stride + 1).min(n_out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Visits every (im2col row, output depth/row) line with its input row offset and the
/// valid output column span.
#[inline]
fn for_each_line(
    g: &ConvGeometry,
    mut f: impl FnMut(usize, usize, Option<usize>, usize, (usize, usize)),
) {
    let [d, h, w] = g.input;
    let [od, oh, ow] = g.output;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let mut row = 0;
    for c in 0..g.in_channels {
        for kd in 0..g.kernel[0] {
            let (d_lo, d_hi) = valid_range(kd, pd, sd, d, od);
            for kh in 0..g.kernel[1] {
                let (h_lo, h_hi) = valid_range(kh, ph, sh, h, oh);
                for kw in 0..g.kernel[2] {
                    let span = valid_range(kw, pw, sw, w, ow);
                    for zd in 0..od {
                        for zh in 0..oh {
                            let line = zd * oh + zh;
                            let src =
                                (zd >= d_lo && zd < d_hi && zh >= h_lo && zh < h_hi).then(|| {
                                    let id = zd * sd + kd - pd;
                                    let ih = zh * sh + kh - ph;
                                    ((c * d + id) * h + ih) * w
                                });
                            f(row, line, src, kw, span);
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Lowers one sample into `col`, whose rows are `ld` apart.
fn im2col<T: Float>(x: &[T], g: &ConvGeometry, col: &mut [T], ld: usize) {
    let ow = g.output[2];
    let (sw, pw) = (g.stride[2], g.pad[2]);
    for_each_line(g, |row, line, src, kw, (lo, hi)| {
        let dst = &mut col[row * ld + line * ow..row * ld + (line + 1) * ow];
        let Some(base) = src else {
            dst.fill(T::ZERO);
            return;
        };
        dst[..lo].fill(T::ZERO);
        dst[hi..].fill(T::ZERO);
        if lo < hi {
            let first = base + lo * sw + kw - pw;
            if sw == 1 {
                dst[lo..hi].copy_from_slice(&x[first..first + (hi - lo)]);
            } else {
                for (j, v) in dst[lo..hi].iter_mut().enumerate() {
                    *v = x[first + j * sw];
                }
            }
        }
    });
}

/// Adjoint of [`im2col`]: accumulates `col` back into one sample's input gradient.
fn col2im<T: Float>(col: &[T], g: &ConvGeometry, dx: &mut [T], ld: usize) {
    let ow = g.output[2];
    let (sw, pw) = (g.stride[2], g.pad[2]);
    for_each_line(g, |row, line, src, kw, (lo, hi)| {
        let Some(base) = src else { return };
        if lo >= hi {
            return;
        }
        let from = &col[row * ld + line * ow + lo..row * ld + line * ow + hi];
        let first = base + lo * sw + kw - pw;
        if sw == 1 {
            for (d, &v) in dx[first..first + (hi - lo)].iter_mut().zip(from) {
                *d += v;
            }
        } else {
            for (j, &v) in from.iter().enumerate() {
                dx[first + j * sw] += v;
            }
        }
    });
}

/// Small maps are batched so every GEMM has at least this many columns.
const MIN_GEMM_COLUMNS: usize = 256;

fn group_size(positions: usize, n: usize) -> usize {
    MIN_GEMM_COLUMNS.div_ceil(positions).clamp(1, n.max(1))
}

/// `C (m x n, row stride ldc) = beta C + A (m x k, row stride lda) B (k x n, row stride ldb)`.
#[allow(clippy::too_many_arguments)]
fn gemm_rm<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    lda: usize,
    b: &[T],
    ldb: usize,
    beta: T,
    c: &mut [T],
    ldc: usize,
) {
    assert!(a.len() >= (m - 1) * lda + k && b.len() >= (k - 1) * ldb + n);
    assert!(c.len() >= (m - 1) * ldc + n);
    // SAFETY: the asserts above keep every access inside the slices.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::ONE,
            a.as_ptr(),
            lda as isize,
            1,
            b.as_ptr(),
            ldb as isize,
            1,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// Forward pass for a batch laid out as `N x C x (D x) H x W`.
pub fn conv_forward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    g: &ConvGeometry,
) -> Tensor<T> {
    let n = x.shape()[0];
    let f = g.out_channels;
    let ck = g.patch_len();
    let p = g.positions();
    let mut out_shape = vec![n, f];
    if x.shape().len() == 5 {
        out_shape.extend_from_slice(&g.output);
    } else {
        out_shape.extend_from_slice(&g.output[1..]);
    }
    let mut out = Tensor::zeros(&out_shape);
    let gs = group_size(p, n);
    let direct = gs == 1;
    let lower = !(direct && g.is_pointwise());
    let mut col = if lower {
        vec![T::ZERO; ck * gs * p]
    } else {
        Vec::new()
    };
    let mut tmp = if direct {
        Vec::new()
    } else {
        vec![T::ZERO; f * gs * p]
    };
    let (w, b) = (weight.data(), bias.data());
    for start in (0..n).step_by(gs) {
        let cnt = gs.min(n - start);
        let ld = cnt * p;
        if lower {
            for j in 0..cnt {
                im2col(x.item(start + j), g, &mut col[j * p..], ld);
            }
        }
        let cols: &[T] = if lower { &col } else { x.item(start) };
        if direct {
            let ys = &mut out.data_mut()[start * f * p..(start + 1) * f * p];
            for (row, &bv) in ys.chunks_exact_mut(p).zip(b) {
                row.fill(bv);
            }
            gemm_rm(f, ck, p, w, ck, cols, p, T::ONE, ys, p);
        } else {
            gemm_rm(f, ck, ld, w, ck, cols, ld, T::ZERO, &mut tmp, ld);
            let od = out.data_mut();
            for j in 0..cnt {
                for (fi, &bv) in b.iter().enumerate() {
                    let dst = &mut od[((start + j) * f + fi) * p..((start + j) * f + fi + 1) * p];
                    let src = &tmp[fi * ld + j * p..fi * ld + (j + 1) * p];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = s + bv;
                    }
                }
            }
        }
    }
    out
}

/// Backward pass. `grad_out` has the forward output's shape; the input gradient is only
/// computed when `need_input_grad` is set.
pub fn conv_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    g: &ConvGeometry,
    need_input_grad: bool,
) -> ConvGrads<T> {
    let n = x.shape()[0];
    let f = g.out_channels;
    let ck = g.patch_len();
    let p = g.positions();
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[f]);
    let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    let gs = group_size(p, n);
    let direct = gs == 1;
    let pointwise = g.is_pointwise();
    let lower = !(direct && pointwise);
    let mut col = if lower {
        vec![T::ZERO; ck * gs * p]
    } else {
        Vec::new()
    };
    let mut dcol = if lower {
        vec![T::ZERO; ck * gs * p]
    } else {
        Vec::new()
    };
    let mut dyt = if direct {
        Vec::new()
    } else {
        vec![T::ZERO; f * gs * p]
    };
    let w = weight.data();
    for start in (0..n).step_by(gs) {
        let cnt = gs.min(n - start);
        let ld = cnt * p;
        for j in 0..cnt {
            for (fi, row) in grad_out.item(start + j).chunks_exact(p).enumerate() {
                let mut acc = T::ZERO;
                for &v in row {
                    acc += v;
                }
                db.data_mut()[fi] += acc;
                if !direct {
                    dyt[fi * ld + j * p..fi * ld + (j + 1) * p].copy_from_slice(row);
                }
            }
        }
        let dy: &[T] = if direct { grad_out.item(start) } else { &dyt };
        if lower {
            for j in 0..cnt {
                im2col(x.item(start + j), g, &mut col[j * p..], ld);
            }
        }
        let cols: &[T] = if lower { &col } else { x.item(start) };
        assert!(cols.len() >= ck * ld && dy.len() >= f * ld);
        // SAFETY: dY is F x ld, col^T is ld x CK (column-major view of col), dW is F x CK.
        unsafe {
            T::gemm(
                f,
                ld,
                ck,
                T::ONE,
                dy.as_ptr(),
                ld as isize,
                1,
                cols.as_ptr(),
                1,
                ld as isize,
                T::ONE,
                dw.data_mut().as_mut_ptr(),
                ck as isize,
                1,
            );
        }
        if let Some(dx) = dx.as_mut() {
            let len = g.input_len();
            let wt_times_dy = |target: &mut [T]| {
                assert!(target.len() >= ck * ld);
                // SAFETY: W^T is CK x F (column-major view of W), dY is F x ld.
                unsafe {
                    T::gemm(
                        ck,
                        f,
                        ld,
                        T::ONE,
                        w.as_ptr(),
                        1,
                        ck as isize,
                        dy.as_ptr(),
                        ld as isize,
                        1,
                        T::ZERO,
                        target.as_mut_ptr(),
                        ld as isize,
                        1,
                    );
                }
            };
            if lower {
                wt_times_dy(&mut dcol);
                for j in 0..cnt {
                    let s = start + j;
                    col2im(
                        &dcol[j * p..],
                        g,
                        &mut dx.data_mut()[s * len..(s + 1) * len],
                        ld,
                    );
                }
            } else {
                wt_times_dy(&mut dx.data_mut()[start * len..(start + 1) * len]);
            }
        }
    }
    ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    }
}

fn geometry_2d<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<ConvGeometry> {
    let (xs, ws) = (x.shape(), weight.shape());
    if xs.len() != 4 || ws.len() != 4 {
        return Err(Error::Shape(format!(
            "conv2d expects NxCxHxW input and FxCxKhxKw weights, got {xs:?} and {ws:?}"
        )));
    }
    if xs[1] != ws[1] || bias.shape() != [ws[0]] {
        return Err(Error::Shape(format!(
            "conv2d channel mismatch: input {xs:?}, weights {ws:?}, bias {:?}",
            bias.shape()
        )));
    }
    ConvGeometry::new(
        ws[1],
        ws[0],
        [1, xs[2], xs[3]],
        [1, ws[2], ws[3]],
        [1, stride, stride],
        [0, pad, pad],
    )
}

fn geometry_3d<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Result<ConvGeometry> {
    let (xs, ws) = (x.shape(), weight.shape());
    if xs.len() != 5 || ws.len() != 5 {
        return Err(Error::Shape(format!(
            "conv3d expects NxCxDxHxW input and FxCxKdxKhxKw weights, got {xs:?} and {ws:?}"
        )));
    }
    if xs[1] != ws[1] || bias.shape() != [ws[0]] {
        return Err(Error::Shape(format!(
            "conv3d channel mismatch: input {xs:?}, weights {ws:?}, bias {:?}",
            bias.shape()
        )));
    }
    ConvGeometry::new(
        ws[1],
        ws[0],
        [xs[2], xs[3], xs[4]],
        [ws[2], ws[3], ws[4]],
        stride,
        pad,
    )
}

pub fn conv2d<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = geometry_2d(x, weight, bias, stride, pad)?;
    Ok(conv_forward(x, weight, bias, &g))
}

pub fn conv2d_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads<T>> {
    let g = geometry_2d(x, weight, bias, stride, pad)?;
    check_grad_shape(grad_out, x.shape()[0], &g, 4)?;
    Ok(conv_backward(x, weight, grad_out, &g, true))
}

pub fn conv3d<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Result<Tensor<T>> {
    let g = geometry_3d(x, weight, bias, stride, pad)?;
    Ok(conv_forward(x, weight, bias, &g))
}

pub fn conv3d_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Result<ConvGrads<T>> {
    let g = geometry_3d(x, weight, bias, stride, pad)?;
    check_grad_shape(grad_out, x.shape()[0], &g, 5)?;
    Ok(conv_backward(x, weight, grad_out, &g, true))
}

fn check_grad_shape<T: Float>(
    grad_out: &Tensor<T>,
    n: usize,
    g: &ConvGeometry,
    rank: usize,
) -> Result<()> {
    let mut expected = vec![n, g.out_channels];
    if rank == 5 {
        expected.extend_from_slice(&g.output);
    } else {
        expected.extend_from_slice(&g.output[1..]);
    }
    if grad_out.shape() != expected.as_slice() {
        return Err(Error::Shape(format!(
            "output gradient {:?} does not match output shape {expected:?}",
            grad_out.shape()
        )));
    }
    Ok(())
}
