//! Parameter-free ops and the loss.

use super::scalar::Real;
use super::tensor::Tensor;
use crate::error::{config_err, Result};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .map(|&x| if x > T::zero() { x } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Gates `grad_out` by `x > 0`. Accepts either the op input or its output,
/// which share the same sign pattern.
pub fn relu_backward<T: Real>(activation: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if activation.shape() != grad_out.shape() {
        return Err(config_err("relu gradient shape mismatch"));
    }
    let data = activation
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(grad_out.shape(), data)
}

/// 2×2 max pooling with stride 2.
#[derive(Clone, Debug)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    /// Flat input index of each output's maximum.
    pub argmax: Vec<usize>,
    pub input_shape: [usize; 4],
}

/// Ties go to the first element in row-major order.
pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<Pooled<T>> {
    let (b, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(config_err(format!(
            "maxpool2 needs even spatial dims, got {h}x{w}"
        )));
    }
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * ho * wo);
    let mut argmax = Vec::with_capacity(b * c * ho * wo);
    for plane in 0..b * c {
        let base = plane * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let mut best = base + 2 * i * w + 2 * j;
                for idx in [best + 1, best + w, best + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::from_vec(&[b, c, ho, wo], out)?,
        argmax,
        input_shape: [b, c, h, w],
    })
}

pub fn maxpool2_backward<T: Real>(pooled: &Pooled<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != pooled.output.shape() {
        return Err(config_err("maxpool2 gradient shape mismatch"));
    }
    let mut gx = Tensor::zeros(&pooled.input_shape);
    let gxd = gx.data_mut();
    for (&idx, &g) in pooled.argmax.iter().zip(grad_out.data()) {
        gxd[idx] += g;
    }
    Ok(gx)
}

/// Concatenates along the channel axis, in argument order.
pub fn concat_channels<T: Real>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| config_err("concat_channels needs at least one input"))?;
    let (b, _, h, w) = first.dims4()?;
    let mut total_c = 0;
    for t in inputs {
        let (b2, c2, h2, w2) = t.dims4()?;
        if (b2, h2, w2) != (b, h, w) {
            return Err(config_err(format!(
                "concat_channels: {:?} incompatible with {:?}",
                t.shape(),
                first.shape()
            )));
        }
        total_c += c2;
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(b * total_c * hw);
    for bi in 0..b {
        for t in inputs {
            let c = t.shape()[1];
            data.extend_from_slice(&t.data()[bi * c * hw..(bi + 1) * c * hw]);
        }
    }
    Tensor::from_vec(&[b, total_c, h, w], data)
}

/// Inverse of [`concat_channels`]: slices channel blocks of the given sizes.
pub fn split_channels<T: Real>(input: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (b, c, h, w) = input.dims4()?;
    if sizes.iter().sum::<usize>() != c {
        return Err(config_err(format!(
            "split sizes {sizes:?} do not sum to {c} channels"
        )));
    }
    let hw = h * w;
    let mut parts: Vec<Vec<T>> = sizes
        .iter()
        .map(|&s| Vec::with_capacity(b * s * hw))
        .collect();
    for bi in 0..b {
        let mut offset = bi * c * hw;
        for (part, &s) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&input.data()[offset..offset + s * hw]);
            offset += s * hw;
        }
    }
    parts
        .into_iter()
        .zip(sizes)
        .map(|(d, &s)| Tensor::from_vec(&[b, s, h, w], d))
        .collect()
}

/// Per-pixel softmax over the channel axis.
pub fn softmax_channels<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = logits.dims4()?;
    let hw = h * w;
    let x = logits.data();
    let mut out = vec![T::zero(); x.len()];
    for bi in 0..b {
        let base = bi * c * hw;
        for p in 0..hw {
            let mut m = T::neg_infinity();
            for ci in 0..c {
                m = m.max(x[base + ci * hw + p]);
            }
            let mut z = T::zero();
            for ci in 0..c {
                let e = (x[base + ci * hw + p] - m).exp();
                out[base + ci * hw + p] = e;
                z += e;
            }
            for ci in 0..c {
                out[base + ci * hw + p] = out[base + ci * hw + p] / z;
            }
        }
    }
    Tensor::from_vec(logits.shape(), out)
}

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean over pixels of `weight · (−ln p_label)` with a two-class softmax
/// over channels (0 = background, 1 = glare). Returns the loss and its
/// gradient with respect to the logits.
pub fn weighted_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[u8],
    weights: &[T],
) -> Result<(f64, Tensor<T>)> {
    let (b, c, h, w) = logits.dims4()?;
    if c != 2 {
        return Err(config_err(format!(
            "loss expects 2 logit channels, got {c}"
        )));
    }
    let hw = h * w;
    let n = b * hw;
    if labels.len() != n || weights.len() != n {
        return Err(config_err(format!(
            "loss: {} labels / {} weights for {n} pixels",
            labels.len(),
            weights.len()
        )));
    }
    let x = logits.data();
    let mut grad = vec![T::zero(); x.len()];
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for bi in 0..b {
        for p in 0..hw {
            let i = bi * hw + p;
            let (i0, i1) = (bi * 2 * hw + p, bi * 2 * hw + hw + p);
            let label = labels[i];
            if label > 1 {
                return Err(config_err(format!("label {label} is not binary")));
            }
            let (l0, l1) = (x[i0].as_f64(), x[i1].as_f64());
            let wgt = weights[i].as_f64();
            // margin of the other class over the true one
            let d = if label == 1 { l0 - l1 } else { l1 - l0 };
            total += wgt * softplus(d);
            let p1 = 1.0 / (1.0 + (l0 - l1).exp());
            let g1 = wgt * (p1 - f64::from(label)) * inv_n;
            grad[i1] = T::lit(g1);
            grad[i0] = T::lit(-g1);
        }
    }
    Ok((total * inv_n, Tensor::from_vec(logits.shape(), grad)?))
}

/// Per-pixel loss weights for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl LossWeights {
    pub fn uniform(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1.0; height * width],
        }
    }

    /// Inverse-frequency class balancing: each present class gets total
    /// weight `n / 2`. If only one class is present every pixel weighs 1.
    pub fn balanced(height: usize, width: usize, labels: &[u8]) -> Result<Self> {
        let n = height * width;
        if labels.len() != n {
            return Err(config_err(format!(
                "{} labels for {n} pixels",
                labels.len()
            )));
        }
        let glare = labels.iter().filter(|&&l| l == 1).count();
        let background = n - glare;
        if glare == 0 || background == 0 {
            return Ok(Self::uniform(height, width));
        }
        let wg = n as f64 / (2.0 * glare as f64);
        let wb = n as f64 / (2.0 * background as f64);
        Ok(Self {
            height,
            width,
            data: labels
                .iter()
                .map(|&l| if l == 1 { wg } else { wb })
                .collect(),
        })
    }
}
