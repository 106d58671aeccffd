//! Forward definitions of the differentiable operations.

use super::tensor::{Op, Reduction};
use super::{Real, Tensor};
use crate::error::{Error, Result};

pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
    pub hout: usize,
    pub wout: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn out_len(&self) -> usize {
        self.hout * self.wout
    }
}

/// Unfolds one (cin, h, w) image into a (cin·k·k, hout·wout) column matrix.
pub(crate) fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let npix = g.out_len();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * npix..(row + 1) * npix];
                for oy in 0..g.hout {
                    let iy = oy as isize + ky as isize - g.pad as isize;
                    let dst_row = &mut dst[oy * g.wout..(oy + 1) * g.wout];
                    if iy < 0 || iy >= g.h as isize {
                        dst_row.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = ox as isize + kx as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::ZERO
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `x`.
pub(crate) fn col2im<T: Real>(cols: &[T], g: &ConvGeom, x: &mut [T]) {
    let npix = g.out_len();
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * npix..(row + 1) * npix];
                for oy in 0..g.hout {
                    let iy = oy as isize + ky as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wout {
                        let ix = ox as isize + kx as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wout + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_geom<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    padding: usize,
) -> Result<(usize, usize, ConvGeom)> {
    let (is, ws) = (input.shape(), weight.shape());
    if is.len() != 4 || ws.len() != 4 {
        return Err(Error::shape(format!(
            "conv2d expects 4-d input and weight, got {is:?} and {ws:?}"
        )));
    }
    let (b, cin, h, w) = (is[0], is[1], is[2], is[3]);
    let (cout, wcin, k, k2) = (ws[0], ws[1], ws[2], ws[3]);
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv2d: input has {cin} channels, weight expects {wcin}"
        )));
    }
    if k != k2 || k % 2 == 0 {
        return Err(Error::shape(format!(
            "conv2d: kernel must be square and odd, got {k}x{k2}"
        )));
    }
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::shape("conv2d: kernel larger than padded input"));
    }
    let g = ConvGeom {
        cin,
        h,
        w,
        k,
        pad: padding,
        hout: h + 2 * padding - k + 1,
        wout: w + 2 * padding - k + 1,
    };
    Ok((b, cout, g))
}

/// 2-d convolution (cross-correlation, stride 1, zero padding).
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    padding: usize,
) -> Result<Tensor<T>> {
    let (b, cout, g) = conv_geom(input, weight, padding)?;
    if bias.shape() != [cout] {
        return Err(Error::shape(format!(
            "conv2d: bias shape {:?}, expected [{cout}]",
            bias.shape()
        )));
    }
    let (plen, npix) = (g.patch_len(), g.out_len());
    let in_len = g.cin * g.h * g.w;
    let mut out = vec![T::ZERO; b * cout * npix];
    let mut cols = vec![T::ZERO; plen * npix];
    for (bi, out_b) in out.chunks_exact_mut(cout * npix).enumerate() {
        im2col(&input.data()[bi * in_len..(bi + 1) * in_len], &g, &mut cols);
        for (co, row) in out_b.chunks_exact_mut(npix).enumerate() {
            row.fill(bias.data()[co]);
        }
        T::gemm(
            cout,
            plen,
            npix,
            T::ONE,
            weight.data(),
            plen as isize,
            1,
            &cols,
            npix as isize,
            1,
            T::ONE,
            out_b,
            npix as isize,
            1,
        );
    }
    Ok(Tensor::from_op(
        vec![b, cout, g.hout, g.wout],
        out,
        Op::Conv2d {
            input: input.clone(),
            weight: weight.clone(),
            bias: bias.clone(),
            padding,
        },
    ))
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > T::ZERO { v } else { T::ZERO })
        .collect();
    Tensor::from_op(x.shape().to_vec(), data, Op::Relu(x.clone()))
}

pub fn tanh_op<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| v.tanh()).collect();
    Tensor::from_op(x.shape().to_vec(), data, Op::Tanh(x.clone()))
}

pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "add: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        Op::Add(a.clone(), b.clone()),
    ))
}

pub fn scale<T: Real>(x: &Tensor<T>, s: f64) -> Tensor<T> {
    let f = T::from_f64(s);
    let data = x.data().iter().map(|&v| v * f).collect();
    Tensor::from_op(x.shape().to_vec(), data, Op::Scale(x.clone(), s))
}

fn shuffle_index((c, h, w): (usize, usize, usize), r: usize) -> impl Iterator<Item = (usize, usize)> {
    // Yields (index in [c·r², h, w] layout, index in [c, h·r, w·r] layout).
    let (ho, wo) = (h * r, w * r);
    (0..c).flat_map(move |ci| {
        (0..ho).flat_map(move |y| {
            (0..wo).map(move |x| {
                let (iy, ox) = (y / r, x / r);
                let sub = (y % r) * r + x % r;
                let src = ((ci * r * r + sub) * h + iy) * w + ox;
                let dst = (ci * ho + y) * wo + x;
                (src, dst)
            })
        })
    })
}

pub(crate) fn shuffle_data<T: Real>(data: &[T], shape: &[usize], r: usize, inverse: bool) -> Vec<T> {
    let mut out = vec![T::ZERO; data.len()];
    let (b, c, h, w) = if inverse {
        (shape[0], shape[1], shape[2] / r, shape[3] / r)
    } else {
        (shape[0], shape[1] / (r * r), shape[2], shape[3])
    };
    let per = c * r * r * h * w;
    for bi in 0..b {
        let (src_b, dst_b) = (
            &data[bi * per..(bi + 1) * per],
            &mut out[bi * per..(bi + 1) * per],
        );
        for (packed, spread) in shuffle_index((c, h, w), r) {
            if inverse {
                dst_b[packed] = src_b[spread];
            } else {
                dst_b[spread] = src_b[packed];
            }
        }
    }
    out
}

/// Sub-pixel rearrangement `[B, C·r², H, W] → [B, C, H·r, W·r]`.
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 4 || r == 0 || !s[1].is_multiple_of(r * r) {
        return Err(Error::shape(format!(
            "pixel_shuffle: shape {s:?} not divisible by r²={}",
            r * r
        )));
    }
    let data = shuffle_data(x.data(), s, r, false);
    Ok(Tensor::from_op(
        vec![s[0], s[1] / (r * r), s[2] * r, s[3] * r],
        data,
        Op::PixelShuffle(x.clone(), r),
    ))
}

/// Inverse of [`pixel_shuffle`]: `[B, C, H·r, W·r] → [B, C·r², H, W]`.
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 4 || r == 0 || !s[2].is_multiple_of(r) || !s[3].is_multiple_of(r) {
        return Err(Error::shape(format!(
            "pixel_unshuffle: spatial extents of {s:?} not divisible by {r}"
        )));
    }
    let data = shuffle_data(x.data(), s, r, true);
    Ok(Tensor::from_op(
        vec![s[0], s[1] * r * r, s[2] / r, s[3] / r],
        data,
        Op::PixelUnshuffle(x.clone(), r),
    ))
}

pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::shape(format!(
            "global_avg_pool expects 4-d input, got {s:?}"
        )));
    }
    let hw = s[2] * s[3];
    let data = x
        .data()
        .chunks_exact(hw)
        .map(|plane| T::from_f64(plane.iter().map(|v| v.to_f64()).sum::<f64>() / hw as f64))
        .collect();
    Ok(Tensor::from_op(
        vec![s[0], s[1]],
        data,
        Op::GlobalAvgPool(x.clone()),
    ))
}

/// Affine map `[B, C] → [B, O]` with weight `[O, C]` and bias `[O]`.
pub fn linear<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (xs, ws) = (x.shape(), weight.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bias.shape() != [ws[0]] {
        return Err(Error::shape(format!(
            "linear: input {xs:?}, weight {ws:?}, bias {:?}",
            bias.shape()
        )));
    }
    let (b, c, o) = (xs[0], xs[1], ws[0]);
    let mut data = Vec::with_capacity(b * o);
    for row in x.data().chunks_exact(c) {
        for (oi, wrow) in weight.data().chunks_exact(c).enumerate() {
            let dot: T = row.iter().zip(wrow).map(|(&a, &w)| a * w).sum();
            data.push(dot + bias.data()[oi]);
        }
    }
    Ok(Tensor::from_op(
        vec![b, o],
        data,
        Op::Linear {
            input: x.clone(),
            weight: weight.clone(),
            bias: bias.clone(),
        },
    ))
}

fn check_pair<T: Real>(name: &str, pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "{name}: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

fn reduce(total: f64, n: usize, reduction: Reduction) -> f64 {
    match reduction {
        Reduction::Mean => total / n as f64,
        Reduction::Sum => total,
    }
}

pub fn l1_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    l1_loss_with(pred, target, Reduction::Mean)
}

pub fn l1_loss_with<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    reduction: Reduction,
) -> Result<Tensor<T>> {
    check_pair("l1_loss", pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t).abs().to_f64())
        .sum();
    Ok(Tensor::from_op(
        Vec::new(),
        vec![T::from_f64(reduce(total, pred.numel(), reduction))],
        Op::L1 {
            pred: pred.clone(),
            target: target.clone(),
            reduction,
        },
    ))
}

pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    mse_loss_with(pred, target, Reduction::Mean)
}

pub fn mse_loss_with<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    reduction: Reduction,
) -> Result<Tensor<T>> {
    check_pair("mse_loss", pred, target)?;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = (p - t).to_f64();
            d * d
        })
        .sum();
    Ok(Tensor::from_op(
        Vec::new(),
        vec![T::from_f64(reduce(total, pred.numel(), reduction))],
        Op::Mse {
            pred: pred.clone(),
            target: target.clone(),
            reduction,
        },
    ))
}

/// Sum of all elements as a scalar.
pub fn sum<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let total: f64 = x.data().iter().map(|v| v.to_f64()).sum();
    Tensor::from_op(Vec::new(), vec![T::from_f64(total)], Op::Sum(x.clone()))
}
