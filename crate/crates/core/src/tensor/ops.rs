//! Forward and backward kernels. These are plain functions over tensors; the
//! [`Tape`](super::Tape) records which of them ran and replays their adjoints.

use super::{Result, Tensor, TensorError};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f32 = 1e-7;

const SIGMOID_CLAMP: f32 = 88.0;

/// Output spatial extent for a convolution along one axis.
pub fn conv_out_dim(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Range of output coordinates whose tap `offset` lands inside `[0, size)`.
#[inline]
fn valid_range(out: usize, size: usize, offset: usize, stride: usize, pad: usize) -> (usize, usize) {
    // in = o * stride + offset - pad
    let lo = if pad > offset {
        (pad - offset).div_ceil(stride)
    } else {
        0
    };
    let hi_in = size as isize - 1 + pad as isize - offset as isize;
    if hi_in < 0 {
        return (0, 0);
    }
    let hi = ((hi_in as usize) / stride + 1).min(out);
    (lo.min(hi), hi)
}

struct ConvGeom {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

fn conv_geom(input: &Tensor, kernel: &Tensor, stride: usize, pad: usize) -> Result<ConvGeom> {
    let [n, c_in, h, w] = input.dims::<4>("conv2d")?;
    let [c_out, k_in, kh, kw] = kernel.dims::<4>("conv2d")?;
    if k_in != c_in {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            axis: "input channels",
            expected: k_in,
            got: c_in,
        });
    }
    if stride == 0 {
        return Err(TensorError::Invalid {
            op: "conv2d",
            message: "stride must be >= 1".into(),
        });
    }
    let oh = conv_out_dim(h, kh, stride, pad).ok_or(TensorError::Invalid {
        op: "conv2d",
        message: format!("kernel height {kh} exceeds padded input height {}", h + 2 * pad),
    })?;
    let ow = conv_out_dim(w, kw, stride, pad).ok_or(TensorError::Invalid {
        op: "conv2d",
        message: format!("kernel width {kw} exceeds padded input width {}", w + 2 * pad),
    })?;
    Ok(ConvGeom {
        n,
        c_in,
        h,
        w,
        c_out,
        kh,
        kw,
        oh,
        ow,
        stride,
        pad,
    })
}

pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = conv_geom(input, kernel, stride, pad)?;
    if bias.len() != g.c_out {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            axis: "bias length",
            expected: g.c_out,
            got: bias.len(),
        });
    }
    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0.0f32; g.n * g.c_out * g.oh * g.ow];
    let plane = g.oh * g.ow;
    for n in 0..g.n {
        for o in 0..g.c_out {
            let dst = &mut out[(n * g.c_out + o) * plane..][..plane];
            dst.fill(bias.data()[o]);
            for i in 0..g.c_in {
                let src = &x[(n * g.c_in + i) * g.h * g.w..][..g.h * g.w];
                for dy in 0..g.kh {
                    let (y0, y1) = valid_range(g.oh, g.h, dy, g.stride, g.pad);
                    for dx in 0..g.kw {
                        let wv = k[((o * g.c_in + i) * g.kh + dy) * g.kw + dx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (x0, x1) = valid_range(g.ow, g.w, dx, g.stride, g.pad);
                        for y in y0..y1 {
                            let iy = y * g.stride + dy - g.pad;
                            let row = &src[iy * g.w..][..g.w];
                            let drow = &mut dst[y * g.ow..][..g.ow];
                            for xo in x0..x1 {
                                drow[xo] += wv * row[xo * g.stride + dx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.n, g.c_out, g.oh, g.ow], out)
}

/// Gradient of a convolution with respect to its input.
pub fn conv2d_grad_input(
    input_shape: &[usize],
    kernel: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let probe = Tensor::zeros(input_shape);
    let g = conv_geom(&probe, kernel, stride, pad)?;
    let k = kernel.data();
    let go = grad_out.data();
    let mut gi = vec![0.0f32; g.n * g.c_in * g.h * g.w];
    let plane = g.oh * g.ow;
    for n in 0..g.n {
        for o in 0..g.c_out {
            let src = &go[(n * g.c_out + o) * plane..][..plane];
            for i in 0..g.c_in {
                let dst = &mut gi[(n * g.c_in + i) * g.h * g.w..][..g.h * g.w];
                for dy in 0..g.kh {
                    let (y0, y1) = valid_range(g.oh, g.h, dy, g.stride, g.pad);
                    for dx in 0..g.kw {
                        let wv = k[((o * g.c_in + i) * g.kh + dy) * g.kw + dx];
                        let (x0, x1) = valid_range(g.ow, g.w, dx, g.stride, g.pad);
                        for y in y0..y1 {
                            let iy = y * g.stride + dy - g.pad;
                            let grow = &src[y * g.ow..][..g.ow];
                            let drow = &mut dst[iy * g.w..][..g.w];
                            for xo in x0..x1 {
                                drow[xo * g.stride + dx - g.pad] += wv * grow[xo];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), gi)
}

/// Gradients of a convolution with respect to kernel and bias.
pub fn conv2d_grad_params(
    input: &Tensor,
    kernel_shape: &[usize],
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor)> {
    let probe = Tensor::zeros(kernel_shape);
    let g = conv_geom(input, &probe, stride, pad)?;
    let x = input.data();
    let go = grad_out.data();
    let mut gk = vec![0.0f32; g.c_out * g.c_in * g.kh * g.kw];
    let mut gb = vec![0.0f32; g.c_out];
    let plane = g.oh * g.ow;
    for n in 0..g.n {
        for o in 0..g.c_out {
            let gplane = &go[(n * g.c_out + o) * plane..][..plane];
            gb[o] += gplane.iter().sum::<f32>();
            for i in 0..g.c_in {
                let src = &x[(n * g.c_in + i) * g.h * g.w..][..g.h * g.w];
                for dy in 0..g.kh {
                    let (y0, y1) = valid_range(g.oh, g.h, dy, g.stride, g.pad);
                    for dx in 0..g.kw {
                        let (x0, x1) = valid_range(g.ow, g.w, dx, g.stride, g.pad);
                        let mut acc = 0.0f32;
                        for y in y0..y1 {
                            let iy = y * g.stride + dy - g.pad;
                            let row = &src[iy * g.w..][..g.w];
                            let grow = &gplane[y * g.ow..][..g.ow];
                            for xo in x0..x1 {
                                acc += grow[xo] * row[xo * g.stride + dx - g.pad];
                            }
                        }
                        gk[((o * g.c_in + i) * g.kh + dy) * g.kw + dx] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(kernel_shape.to_vec(), gk)?,
        Tensor::new(vec![g.c_out], gb)?,
    ))
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// 2x2 / stride-2 max pooling. Returns the pooled tensor and, per output
/// element, the flat input index that won (first in row-major window order on ties).
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let [n, c, h, w] = input.dims::<4>("maxpool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::Invalid {
            op: "maxpool2",
            message: format!("spatial dims must be even, got {h}x{w}"),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let candidates = [
                    base + 2 * y * w + 2 * xo,
                    base + 2 * y * w + 2 * xo + 1,
                    base + (2 * y + 1) * w + 2 * xo,
                    base + (2 * y + 1) * w + 2 * xo + 1,
                ];
                let mut best = candidates[0];
                for &idx in &candidates[1..] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, arg))
}

/// Global average pooling, NCHW -> NC.
pub fn gap(input: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.dims::<4>("gap")?;
    let z = (h * w) as f32;
    let out = input.data().chunks_exact(h * w).map(|p| p.iter().sum::<f32>() / z).collect();
    Tensor::new(vec![n, c], out)
}

/// `input · weightᵀ + bias` for input NK, weight CK, bias C.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [n, k] = input.dims::<2>("linear")?;
    let [c, wk] = weight.dims::<2>("linear")?;
    if wk != k {
        return Err(TensorError::ShapeMismatch {
            op: "linear",
            axis: "inner dimension",
            expected: wk,
            got: k,
        });
    }
    if bias.len() != c {
        return Err(TensorError::ShapeMismatch {
            op: "linear",
            axis: "bias length",
            expected: c,
            got: bias.len(),
        });
    }
    let x = input.data();
    let wt = weight.data();
    let mut out = Vec::with_capacity(n * c);
    for row in x.chunks_exact(k) {
        for (j, wrow) in wt.chunks_exact(k).enumerate() {
            let dot: f32 = row.iter().zip(wrow).map(|(a, b)| a * b).sum();
            out.push(dot + bias.data()[j]);
        }
    }
    Tensor::new(vec![n, c], out)
}

/// Plain matrix product, MK · KN -> MN.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [m, k] = a.dims::<2>("matmul")?;
    let [bk, n] = b.dims::<2>("matmul")?;
    if bk != k {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            axis: "inner dimension",
            expected: k,
            got: bk,
        });
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..][..n];
        for p in 0..k {
            let av = ad[i * k + p];
            for (o, &bv) in orow.iter_mut().zip(&bd[p * n..][..n]) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let [m, n] = a.dims::<2>("transpose")?;
    let d = a.data();
    let mut out = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            out.push(d[i * n + j]);
        }
    }
    Tensor::new(vec![n, m], out)
}

#[inline]
pub fn sigmoid_scalar(x: f32) -> f32 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

pub fn tanh(input: &Tensor) -> Tensor {
    input.map(f32::tanh)
}

/// Row-wise softmax over the last axis of an NC tensor.
pub fn softmax(input: &Tensor) -> Result<Tensor> {
    let [_, c] = input.dims::<2>("softmax")?;
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks_exact(c) {
        let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f32> = row.iter().map(|&v| (v - m).exp()).collect();
        let s: f32 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / s));
    }
    Tensor::new(input.shape().to_vec(), out)
}

fn check_targets(probs: &Tensor, targets: &Tensor) -> Result<()> {
    probs.expect_same_shape("bce_loss", targets)?;
    if let Some(bad) = targets.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(TensorError::Invalid {
            op: "bce_loss",
            message: format!("targets must be 0 or 1, found {bad}"),
        });
    }
    Ok(())
}

/// Mean binary cross-entropy over every element.
pub fn bce_loss(probs: &Tensor, targets: &Tensor) -> Result<Tensor> {
    check_targets(probs, targets)?;
    let n = probs.len() as f32;
    let total: f32 = probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(Tensor::scalar(total / n))
}

pub fn bce_grad(probs: &Tensor, targets: &Tensor, upstream: f32) -> Result<Tensor> {
    check_targets(probs, targets)?;
    let n = probs.len() as f32;
    let data = probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            upstream * (-t / p + (1.0 - t) / (1.0 - p)) / n
        })
        .collect();
    Tensor::new(probs.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_scalar_kernel_scales_input() {
        let x = t(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let k = t(&[1, 1, 1, 1], &[2.0]);
        let y = conv2d(&x, &k, &Tensor::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(y.data(), x.scale(2.0).data());
    }

    #[test]
    fn conv_identity_diagonal_sum() {
        let x = t(&[1, 1, 2, 2], &[1., 2., 3., 4.]);
        let k = t(&[1, 1, 2, 2], &[1., 0., 0., 1.]);
        let y = conv2d(&x, &k, &Tensor::zeros(&[1]), 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn conv_zero_kernel_is_zero() {
        let x = t(&[1, 2, 4, 4], &(0..32).map(|v| v as f32 - 7.0).collect::<Vec<_>>());
        let k = Tensor::zeros(&[3, 2, 3, 3]);
        let y = conv2d(&x, &k, &Tensor::zeros(&[3]), 1, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    /// Direct transcription of the definitional sum, used as the oracle.
    fn conv_oracle(x: &Tensor, k: &Tensor, b: &Tensor, s: usize, p: usize) -> Vec<f32> {
        let [n, ci, h, w] = x.dims::<4>("o").unwrap();
        let [co, _, kh, kw] = k.dims::<4>("o").unwrap();
        let oh = (h + 2 * p - kh) / s + 1;
        let ow = (w + 2 * p - kw) / s + 1;
        let mut out = vec![];
        for nn in 0..n {
            for o in 0..co {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = b.data()[o] as f64;
                        for i in 0..ci {
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    let iy = (y * s + dy) as isize - p as isize;
                                    let ix = (xx * s + dx) as isize - p as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let xv = x.data()[((nn * ci + i) * h + iy as usize) * w + ix as usize];
                                    let kv = k.data()[((o * ci + i) * kh + dy) * kw + dx];
                                    acc += xv as f64 * kv as f64;
                                }
                            }
                        }
                        out.push(acc as f32);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_definition_with_stride_and_pad() {
        let mut rng = crate::rng::SplitMix64::new(3);
        for &(s, p, h, w) in &[(1, 1, 5, 6), (2, 1, 7, 7), (2, 0, 6, 5), (3, 2, 8, 9)] {
            let x = Tensor::new(vec![2, 3, h, w], rng.uniform_vec(2 * 3 * h * w, -1.0, 1.0)).unwrap();
            let k = Tensor::new(vec![4, 3, 3, 3], rng.uniform_vec(108, -1.0, 1.0)).unwrap();
            let b = Tensor::new(vec![4], rng.uniform_vec(4, -1.0, 1.0)).unwrap();
            let got = conv2d(&x, &k, &b, s, p).unwrap();
            let want = conv_oracle(&x, &k, &b, s, p);
            for (g, w) in got.data().iter().zip(&want) {
                assert!((g - w).abs() < 1e-5, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn conv_reports_channel_axis() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        let err = conv2d(&x, &k, &Tensor::zeros(&[1]), 1, 1).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { axis: "input channels", .. }));
    }

    #[test]
    fn relu_cases() {
        assert_eq!(relu(&t(&[3], &[-1., 0., 2.])).data(), &[0., 0., 2.]);
        assert!(relu(&t(&[3], &[-1., -4., -0.5])).data().iter().all(|&v| v == 0.0));
        let pos = t(&[2], &[0.5, 3.0]);
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn maxpool_cases() {
        let (y, _) = maxpool2(&t(&[1, 1, 2, 2], &[1., 2., 3., 4.])).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let (y, _) = maxpool2(&Tensor::full(&[1, 2, 4, 4], 1.5)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 1.5));
        let ramp: Vec<f32> = (1..=16).map(|v| v as f32).collect();
        let (y, _) = maxpool2(&t(&[1, 1, 4, 4], &ramp)).unwrap();
        assert_eq!(y.data(), &[6., 8., 14., 16.]);
        assert!(maxpool2(&Tensor::zeros(&[1, 1, 3, 4])).is_err());
    }

    #[test]
    fn maxpool_ties_pick_first() {
        let (_, arg) = maxpool2(&Tensor::full(&[1, 1, 2, 2], 7.0)).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn gap_cases() {
        assert_eq!(gap(&t(&[1, 1, 2, 2], &[1., 2., 3., 4.])).unwrap().data(), &[2.5]);
        assert_eq!(gap(&Tensor::full(&[1, 1, 3, 3], 4.0)).unwrap().data(), &[4.0]);
        assert_eq!(gap(&Tensor::zeros(&[2, 3, 2, 2])).unwrap().data(), &[0.0; 6]);
    }

    #[test]
    fn linear_cases() {
        let x = t(&[1, 2], &[0.3, -0.7]);
        let eye = t(&[2, 2], &[1., 0., 0., 1.]);
        assert_eq!(linear(&x, &eye, &Tensor::zeros(&[2])).unwrap().data(), x.data());
        let a = t(&[1, 2], &[2.5, 2.5]);
        assert_eq!(linear(&a, &t(&[1, 2], &[1., -1.]), &Tensor::zeros(&[1])).unwrap().data(), &[0.0]);
        let y = linear(&t(&[1, 2], &[1., 2.]), &t(&[1, 2], &[3., 4.]), &t(&[1], &[5.])).unwrap();
        assert_eq!(y.data(), &[16.0]);
        assert!(linear(&t(&[1, 3], &[1., 2., 3.]), &eye, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn sigmoid_cases() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        for &x in &[0.1f32, 1.3, 4.0, 9.5, 30.0] {
            assert!((sigmoid_scalar(-x) - (1.0 - sigmoid_scalar(x))).abs() < 1e-6);
        }
        // 1 / (1 + e^-10) = 0.99995460213...
        assert!((sigmoid_scalar(10.0) - 0.999_954_6).abs() < 1e-6);
        assert!(sigmoid(&t(&[2], &[1e9, -1e9])).is_finite());
    }

    #[test]
    fn softmax_cases() {
        let u = softmax(&t(&[1, 4], &[3.0; 4])).unwrap();
        assert!(u.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
        let l = softmax(&t(&[1, 2], &[0.0, 1000.0])).unwrap();
        assert!(l.data()[0] < 1e-6 && (l.data()[1] - 1.0).abs() < 1e-6);
        // e^k / (e + e^2 + e^3) for k = 1, 2, 3
        let s = softmax(&t(&[1, 3], &[1., 2., 3.])).unwrap();
        for (g, w) in s.data().iter().zip(&[0.090_030_57, 0.244_728_47, 0.665_240_96]) {
            assert!((g - w).abs() < 1e-4);
        }
    }

    #[test]
    fn bce_cases() {
        let p = t(&[1, 3], &[1.0, 0.0, 1.0]);
        assert!(bce_loss(&p, &p).unwrap().item() <= 1e-6);
        let half = Tensor::full(&[2, 3], 0.5);
        let tg = t(&[2, 3], &[1., 0., 1., 0., 0., 1.]);
        assert!((bce_loss(&half, &tg).unwrap().item() - std::f32::consts::LN_2).abs() < 1e-6);
        let l = bce_loss(&t(&[1, 2], &[0.9, 0.2]), &t(&[1, 2], &[1., 0.])).unwrap();
        let want = (-(0.9f64.ln()) - 0.8f64.ln()) / 2.0;
        assert!((l.item() as f64 - want).abs() < 1e-4);
        assert!((want - 0.1643).abs() < 1e-4);
        assert!(bce_loss(&half, &Tensor::full(&[2, 3], 0.5)).is_err());
    }

    #[test]
    fn matmul_and_transpose() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let at = transpose(&a).unwrap();
        assert_eq!(at.data(), &[1., 4., 2., 5., 3., 6.]);
        let p = matmul(&a, &at).unwrap();
        assert_eq!(p.data(), &[14., 32., 32., 77.]);
    }
}
