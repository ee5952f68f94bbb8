//! Parameterized layers: same-padding stride-1 convolution and the 2×2
//! stride-2 transposed convolution, both lowered to GEMM.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scalar::{gemm, gemm_strided, MatRef, Real};
use super::tensor::Tensor;
use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    /// `k×k` convolution, stride 1, zero padding `k/2`.
    Conv { kernel: usize },
    /// 2×2 transposed convolution with stride 2.
    UpConv2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerDesc {
    pub fn conv(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kind: LayerKind::Conv { kernel },
            in_channels,
            out_channels,
        }
    }

    pub fn upconv2(in_channels: usize, out_channels: usize) -> Self {
        Self {
            kind: LayerKind::UpConv2,
            in_channels,
            out_channels,
        }
    }

    /// `(O, C, k, k)` for convolutions, `(C, O, 2, 2)` for transposed ones.
    pub fn weight_shape(&self) -> [usize; 4] {
        match self.kind {
            LayerKind::Conv { kernel } => [self.out_channels, self.in_channels, kernel, kernel],
            LayerKind::UpConv2 => [self.in_channels, self.out_channels, 2, 2],
        }
    }

    /// Inputs contributing to one output value.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv { kernel } => self.in_channels * kernel * kernel,
            LayerKind::UpConv2 => self.in_channels,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + self.out_channels
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub desc: LayerDesc,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LayerParams<T> {
    pub fn zeros(desc: LayerDesc) -> Self {
        Self {
            desc,
            weight: Tensor::zeros(&desc.weight_shape()).with_grad(),
            bias: Tensor::zeros(&[desc.out_channels]).with_grad(),
        }
    }

    /// He-normal weights (`σ = √(2 / fan_in)`), zero bias.
    pub fn he_normal<R: Rng + ?Sized>(desc: LayerDesc, rng: &mut R) -> Self {
        let mut p = Self::zeros(desc);
        let std = (2.0 / desc.fan_in() as f64).sqrt();
        for w in p.weight.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = T::lit(z * std);
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}

/// Gradients of one layer application.
#[derive(Clone, Debug)]
pub struct LayerGrads<T> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

fn expect_channels<T: Real>(
    input: &Tensor<T>,
    p: &LayerParams<T>,
) -> Result<(usize, usize, usize, usize)> {
    let dims = input.dims4()?;
    if dims.1 != p.desc.in_channels {
        return Err(config_err(format!(
            "layer expects {} input channels, got {}",
            p.desc.in_channels, dims.1
        )));
    }
    if p.weight.shape() != p.desc.weight_shape() || p.bias.len() != p.desc.out_channels {
        return Err(config_err("layer parameters do not match their descriptor"));
    }
    Ok(dims)
}

fn conv_kernel<T: Real>(p: &LayerParams<T>) -> Result<usize> {
    match p.desc.kind {
        LayerKind::Conv { kernel } if kernel % 2 == 1 => Ok(kernel),
        LayerKind::Conv { kernel } => Err(config_err(format!("kernel {kernel} must be odd"))),
        LayerKind::UpConv2 => Err(config_err("conv2d called with a transposed-conv layer")),
    }
}

/// Column span `[lo, hi)` of output positions whose tap `kx` lands inside
/// a row of length `w`.
fn valid_span(w: usize, k_off: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k_off);
    let hi = (w + pad).saturating_sub(k_off).min(w);
    (lo, hi.max(lo))
}

/// Lowers rows `y0..y1` of a `c×h×w` image to columns: row
/// `(ci·k + ky)·k + kx` holds the tap `(ky, kx)` of channel `ci` for each
/// output pixel in the range.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    y0: usize,
    y1: usize,
    col: &mut [T],
) {
    let pad = k / 2;
    let hw = h * w;
    let npix = (y1 - y0) * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * npix..][..npix];
                let (xlo, xhi) = valid_span(w, kx, pad);
                let shift = kx as isize - pad as isize;
                for y in y0..y1 {
                    let dst = &mut row[(y - y0) * w..(y - y0 + 1) * w];
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    dst[..xlo].fill(T::zero());
                    dst[xhi..].fill(T::zero());
                    let lo = (xlo as isize + shift) as usize;
                    dst[xlo..xhi].copy_from_slice(&src[lo..lo + (xhi - xlo)]);
                }
            }
        }
    }
}

/// Column-buffer budget per chunk; keeps the lowered block cache-resident.
const CHUNK_BYTES: usize = 192 * 1024;

/// Image rows per chunk for a lowered height of `ckk` values per pixel.
fn chunk_rows<T: Real>(ckk: usize, w: usize, h: usize) -> usize {
    (CHUNK_BYTES / (ckk * w * T::BYTES)).clamp(1, h)
}

/// `y += weight · im2col(x)` for one image, chunked by rows; `weight` is
/// `o × (c·k·k)` row-major.
#[allow(clippy::too_many_arguments)]
fn correlate_into<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    weight: &[T],
    o: usize,
    y: &mut [T],
    col: &mut Vec<T>,
) {
    let (hw, ckk) = (h * w, c * k * k);
    if k == 1 {
        gemm(o, hw, ckk, weight, false, x, false, y, T::one());
        return;
    }
    let rows = chunk_rows::<T>(ckk, w, h);
    col.resize(ckk * rows * w, T::zero());
    let wt = MatRef::row_major(weight, ckk);
    for y0 in (0..h).step_by(rows) {
        let y1 = (y0 + rows).min(h);
        let npix = (y1 - y0) * w;
        im2col(x, c, h, w, k, y0, y1, col);
        let cols = MatRef::row_major(&col[..ckk * npix], npix);
        gemm_strided(o, npix, ckk, wt, cols, &mut y[y0 * w..], hw, T::one());
    }
}

/// Cross-correlation with an odd `k×k` kernel, stride 1, zero padding,
/// plus bias. Output has the input's spatial size.
pub fn conv2d<T: Real>(input: &Tensor<T>, p: &LayerParams<T>) -> Result<Tensor<T>> {
    let k = conv_kernel(p)?;
    let (b, c, h, w) = expect_channels(input, p)?;
    let o = p.desc.out_channels;
    let hw = h * w;
    let mut out = Tensor::zeros(&[b, o, h, w]);
    let mut col = Vec::new();
    for bi in 0..b {
        let x = &input.data()[bi * c * hw..(bi + 1) * c * hw];
        let y = &mut out.data_mut()[bi * o * hw..(bi + 1) * o * hw];
        for (oi, row) in y.chunks_exact_mut(hw).enumerate() {
            row.fill(p.bias.data()[oi]);
        }
        correlate_into(x, c, h, w, k, p.weight.data(), o, y, &mut col);
    }
    Ok(out)
}

/// Inner product with eight independent partial sums, which the compiler
/// maps onto SIMD lanes.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Kernel of the adjoint convolution: `W'[c, o, ky, kx] = W[o, c, k−1−ky, k−1−kx]`.
fn adjoint_kernel<T: Real>(weight: &[T], o: usize, c: usize, k: usize) -> Vec<T> {
    let kk = k * k;
    let mut out = vec![T::zero(); weight.len()];
    for oi in 0..o {
        for ci in 0..c {
            for t in 0..kk {
                out[(ci * o + oi) * kk + (kk - 1 - t)] = weight[(oi * c + ci) * kk + t];
            }
        }
    }
    out
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    p: &LayerParams<T>,
    grad_out: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    let k = conv_kernel(p)?;
    let (b, c, h, w) = expect_channels(input, p)?;
    let o = p.desc.out_channels;
    if grad_out.shape() != [b, o, h, w] {
        return Err(config_err(format!(
            "conv2d gradient shape {:?} does not match output [{b}, {o}, {h}, {w}]",
            grad_out.shape()
        )));
    }
    let (hw, ckk) = (h * w, c * k * k);
    let mut gw = vec![T::zero(); o * ckk];
    let mut gb = vec![T::zero(); o];
    let mut gx = Tensor::zeros(&[b, c, h, w]);
    let adjoint = adjoint_kernel(p.weight.data(), o, c, k);
    let rows = chunk_rows::<T>(ckk, w, h);
    let mut col = vec![T::zero(); ckk * rows * w];
    let mut col_adj = Vec::new();
    for bi in 0..b {
        let x = &input.data()[bi * c * hw..(bi + 1) * c * hw];
        let gy = &grad_out.data()[bi * o * hw..(bi + 1) * o * hw];
        for (oi, row) in gy.chunks_exact(hw).enumerate() {
            gb[oi] += row.iter().copied().sum::<T>();
        }
        // the adjoint of a same-padded stride-1 correlation is a
        // correlation with the flipped, transposed kernel
        let gxb = &mut gx.data_mut()[bi * c * hw..(bi + 1) * c * hw];
        correlate_into(gy, o, h, w, k, &adjoint, c, gxb, &mut col_adj);
        if k == 1 {
            gemm(o, ckk, hw, gy, false, x, true, &mut gw, T::one());
            continue;
        }
        for y0 in (0..h).step_by(rows) {
            let y1 = (y0 + rows).min(h);
            let npix = (y1 - y0) * w;
            im2col(x, c, h, w, k, y0, y1, &mut col);
            // gW (O × CKK) += gy (O × npix) · colᵀ
            for oi in 0..o {
                let g = &gy[oi * hw + y0 * w..][..npix];
                for (j, acc) in gw[oi * ckk..(oi + 1) * ckk].iter_mut().enumerate() {
                    *acc += dot(g, &col[j * npix..(j + 1) * npix]);
                }
            }
        }
    }
    Ok(LayerGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

fn upconv_check<T: Real>(
    input: &Tensor<T>,
    p: &LayerParams<T>,
) -> Result<(usize, usize, usize, usize)> {
    if p.desc.kind != LayerKind::UpConv2 {
        return Err(config_err("upconv2 called with a convolution layer"));
    }
    expect_channels(input, p)
}

/// Transposed convolution with a 2×2 kernel and stride 2; doubles the
/// spatial size exactly.
pub fn upconv2<T: Real>(input: &Tensor<T>, p: &LayerParams<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = upconv_check(input, p)?;
    let o = p.desc.out_channels;
    let hw = h * w;
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(&[b, o, h2, w2]);
    let mut tmp = vec![T::zero(); 4 * o * hw];
    for bi in 0..b {
        let x = &input.data()[bi * c * hw..(bi + 1) * c * hw];
        // tmp[(o·4 + a·2 + d), i·w + j] = Σ_c W[c, o, a, d] · x[c, i, j]
        gemm(
            4 * o,
            hw,
            c,
            p.weight.data(),
            true,
            x,
            false,
            &mut tmp,
            T::zero(),
        );
        let y = &mut out.data_mut()[bi * o * 4 * hw..(bi + 1) * o * 4 * hw];
        for oi in 0..o {
            let bias = p.bias.data()[oi];
            for tap in 0..4 {
                let (a, d) = (tap / 2, tap % 2);
                let src = &tmp[(oi * 4 + tap) * hw..][..hw];
                for i in 0..h {
                    let dst_row = &mut y[(oi * h2 + 2 * i + a) * w2..][..w2];
                    for j in 0..w {
                        dst_row[2 * j + d] = src[i * w + j] + bias;
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn upconv2_backward<T: Real>(
    input: &Tensor<T>,
    p: &LayerParams<T>,
    grad_out: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    let (b, c, h, w) = upconv_check(input, p)?;
    let o = p.desc.out_channels;
    let (h2, w2) = (2 * h, 2 * w);
    if grad_out.shape() != [b, o, h2, w2] {
        return Err(config_err(format!(
            "upconv2 gradient shape {:?} does not match output [{b}, {o}, {h2}, {w2}]",
            grad_out.shape()
        )));
    }
    let hw = h * w;
    let mut gw = vec![T::zero(); c * o * 4];
    let mut gb = vec![T::zero(); o];
    let mut gx = Tensor::zeros(&[b, c, h, w]);
    let mut gtmp = vec![T::zero(); 4 * o * hw];
    for bi in 0..b {
        let x = &input.data()[bi * c * hw..(bi + 1) * c * hw];
        let gy = &grad_out.data()[bi * o * 4 * hw..(bi + 1) * o * 4 * hw];
        for oi in 0..o {
            gb[oi] += gy[oi * 4 * hw..(oi + 1) * 4 * hw]
                .iter()
                .copied()
                .sum::<T>();
            for tap in 0..4 {
                let (a, d) = (tap / 2, tap % 2);
                let dst = &mut gtmp[(oi * 4 + tap) * hw..][..hw];
                for i in 0..h {
                    let src_row = &gy[(oi * h2 + 2 * i + a) * w2..][..w2];
                    for j in 0..w {
                        dst[i * w + j] = src_row[2 * j + d];
                    }
                }
            }
        }
        // gW (C × 4O) += x (C × HW) · gtmpᵀ ; gx (C × HW) = W (C × 4O) · gtmp
        gemm(c, 4 * o, hw, x, false, &gtmp, true, &mut gw, T::one());
        let gxb = &mut gx.data_mut()[bi * c * hw..(bi + 1) * c * hw];
        gemm(
            c,
            hw,
            4 * o,
            p.weight.data(),
            false,
            &gtmp,
            false,
            gxb,
            T::zero(),
        );
    }
    Ok(LayerGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}
