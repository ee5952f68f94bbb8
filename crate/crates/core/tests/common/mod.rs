//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use glareseg::dataset::{synthesize_glare, Resolution, SamplePair, SynthParams};
use glareseg::evalkit::{AblationReport, MeanStd, Metrics, ReportColumn};
use glareseg::imgrep::{build_plane_set, Combo, ContrastParams, Representation, ScalarMap};
use glareseg::nncore::{
    conv2d, conv2d_backward, finite_diff_check, finite_diff_check_masked, maxpool2,
    maxpool2_backward, relu, relu_backward, upconv2, upconv2_backward, weighted_cross_entropy,
    GradCheck, LayerDesc, LayerGrads, LayerParams, Tensor,
};
use glareseg::unet::{build_model, BranchSpec, Model, UNetConfig};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- contrast

/// Per-pixel windowed sample std over the floored windowed mean, computed
/// directly with a two-pass mean/variance over the clipped window.
pub fn contrast_oracle(l: &ScalarMap, p: &ContrastParams) -> ScalarMap {
    let (h, w) = (l.height as isize, l.width as isize);
    let (hy, hx) = ((p.window_m / 2) as isize, (p.window_n / 2) as isize);
    let mut out = Vec::with_capacity(l.data.len());
    for y in 0..h {
        for x in 0..w {
            let mut vals = Vec::new();
            for yy in (y - hy).max(0)..=(y + hy).min(h - 1) {
                for xx in (x - hx).max(0)..=(x + hx).min(w - 1) {
                    vals.push(l.data[(yy * w + xx) as usize]);
                }
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            out.push(var.sqrt() / mean.max(p.luminance_floor));
        }
    }
    ScalarMap::new(l.height, l.width, out).unwrap()
}

/// Random luminance map with smooth structure, flat patches and spikes,
/// spanning the range the luminance transform produces.
pub fn random_luminance(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ScalarMap {
    let scale = [1.0, 30.0, 400.0, 1500.0][rng.random_range(0..4)];
    let (fy, fx) = (rng.random_range(0.05..0.5), rng.random_range(0.05..0.5));
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let smooth = 0.5 + 0.5 * ((y as f64 * fy).sin() * (x as f64 * fx).cos());
            data.push(scale * (0.7 * smooth + 0.3 * rng.random::<f64>()));
        }
    }
    let (py, px) = (rng.random_range(0..h / 2), rng.random_range(0..w / 2));
    let flat = rng.random::<f64>() * scale;
    for y in py..py + h / 4 {
        for x in px..px + w / 4 {
            data[y * w + x] = flat;
        }
    }
    ScalarMap::new(h, w, data).unwrap()
}

// ---------------------------------------------------------------- otsu

/// Exhaustive search over the 255 bin boundaries with the between-class
/// variance `w0·w1·(μ0 − μ1)²` evaluated in exact rationals.
pub fn otsu_oracle(values: &[f64]) -> f64 {
    let mut counts = [0i64; 256];
    for &v in values {
        counts[((v * 256.0).floor() as usize).min(255)] += 1;
    }
    let n: i64 = counts.iter().sum();
    let r = |a: i64, b: i64| BigRational::new(BigInt::from(a), BigInt::from(b));
    let mut best: Option<(usize, BigRational)> = None;
    for t in 1..256 {
        let n0: i64 = counts[..t].iter().sum();
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: i64 = counts[..t]
            .iter()
            .enumerate()
            .map(|(i, &c)| i as i64 * c)
            .sum();
        let s1: i64 = counts[t..]
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + t) as i64 * c)
            .sum();
        let diff = r(s0, n0) - r(s1, n1);
        let score = r(n0, n) * r(n1, n) * diff.clone() * diff;
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((t, score));
        }
    }
    best.map_or(1.0, |(t, _)| t as f64 / 256.0)
}

/// Probability maps of assorted shapes: bimodal, uniform, quantized (many
/// ties), near-constant and saturated at the interval ends.
pub fn random_probability_map(rng: &mut ChaCha8Rng) -> ScalarMap {
    let (h, w) = (rng.random_range(1..24), rng.random_range(1..24));
    let kind = rng.random_range(0..5);
    let (m0, m1) = (rng.random::<f64>(), rng.random::<f64>());
    let levels = rng.random_range(2..6) as f64;
    let data = (0..h * w)
        .map(|_| {
            let v: f64 = match kind {
                0 => {
                    let m = if rng.random_bool(0.3) { m1 } else { m0 };
                    m + 0.08 * (rng.random::<f64>() - 0.5)
                }
                1 => rng.random(),
                2 => (rng.random::<f64>() * levels).floor() / levels,
                3 => m0 + 1e-4 * rng.random::<f64>(),
                _ => [0.0, 1.0, rng.random()][rng.random_range(0..3)],
            };
            v.clamp(0.0, 1.0)
        })
        .collect();
    ScalarMap::new(h, w, data).unwrap()
}

// ---------------------------------------------------------------- gradients

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_layer(rng: &mut ChaCha8Rng, desc: LayerDesc) -> LayerParams<f64> {
    let mut p = LayerParams::he_normal(desc, rng);
    for b in p.bias.data_mut() {
        *b = rng.random_range(-0.5..0.5);
    }
    p
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const EPS: f64 = 1e-6;

type Forward = fn(&Tensor<f64>, &LayerParams<f64>) -> glareseg::Result<Tensor<f64>>;
type Backward =
    fn(&Tensor<f64>, &LayerParams<f64>, &Tensor<f64>) -> glareseg::Result<LayerGrads<f64>>;

/// Checks a parameterized layer through the scalar `⟨r, layer(x)⟩` for a
/// random projection `r`, over input, weights and bias together.
fn check_param_layer(
    rng: &mut ChaCha8Rng,
    desc: LayerDesc,
    in_shape: [usize; 4],
    forward: Forward,
    backward: Backward,
    corrupt: bool,
) -> GradCheck {
    let x = random_tensor(rng, &in_shape);
    let p = random_layer(rng, desc);
    let y = forward(&x, &p).unwrap();
    let r = random_tensor(rng, y.shape());
    let g = backward(&x, &p, &r).unwrap();
    let (nx, nw) = (x.len(), p.weight.len());
    let point: Vec<f64> = [x.data(), p.weight.data(), p.bias.data()].concat();
    let mut analytic: Vec<f64> = [g.input.data(), &g.weight[..], &g.bias[..]].concat();
    if corrupt {
        analytic[nx] *= 1.1;
    }
    let mut probe = p.clone();
    finite_diff_check(
        |v| {
            let xi = Tensor::from_vec(&in_shape, v[..nx].to_vec()).unwrap();
            probe.weight.data_mut().copy_from_slice(&v[nx..nx + nw]);
            probe.bias.data_mut().copy_from_slice(&v[nx + nw..]);
            dot(forward(&xi, &probe).unwrap().data(), r.data())
        },
        &point,
        &analytic,
        EPS,
    )
}

/// Conv check with one weight gradient inflated by 10%; must be caught.
pub fn corrupted_conv_check() -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    check_param_layer(
        &mut rng,
        LayerDesc::conv(3, 2, 3),
        [1, 2, 5, 5],
        conv2d,
        conv2d_backward,
        true,
    )
}

/// Finite-difference results for every differentiable op.
pub fn layer_gradchecks() -> Vec<(&'static str, GradCheck)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = vec![
        (
            "conv2d 3x3",
            check_param_layer(
                &mut rng,
                LayerDesc::conv(3, 3, 4),
                [2, 3, 6, 5],
                conv2d,
                conv2d_backward,
                false,
            ),
        ),
        (
            "conv2d 1x1",
            check_param_layer(
                &mut rng,
                LayerDesc::conv(1, 4, 2),
                [1, 4, 4, 4],
                conv2d,
                conv2d_backward,
                false,
            ),
        ),
        (
            "upconv2",
            check_param_layer(
                &mut rng,
                LayerDesc::upconv2(3, 2),
                [2, 3, 3, 4],
                upconv2,
                upconv2_backward,
                false,
            ),
        ),
    ];

    // relu: skip coordinates within 1e-3 of the kink
    let x = random_tensor(&mut rng, &[2, 3, 4, 4]);
    let r = random_tensor(&mut rng, x.shape());
    let g = relu_backward(&x, &r).unwrap();
    let xs = x.data().to_vec();
    out.push((
        "relu",
        finite_diff_check_masked(
            |v| {
                dot(
                    relu(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap()).data(),
                    r.data(),
                )
            },
            x.data(),
            g.data(),
            EPS,
            |i| xs[i].abs() < 1e-3,
        ),
    ));

    // maxpool: random values are distinct, so every window has a strict max
    let x = random_tensor(&mut rng, &[2, 2, 6, 4]);
    let pooled = maxpool2(&x).unwrap();
    let r = random_tensor(&mut rng, pooled.output.shape());
    let g = maxpool2_backward(&pooled, &r).unwrap();
    out.push((
        "maxpool2",
        finite_diff_check(
            |v| {
                dot(
                    maxpool2(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap())
                        .unwrap()
                        .output
                        .data(),
                    r.data(),
                )
            },
            x.data(),
            g.data(),
            EPS,
        ),
    ));

    // weighted cross-entropy over logits
    let logits = random_tensor(&mut rng, &[2, 2, 3, 5]);
    let labels: Vec<u8> = (0..30).map(|_| rng.random_range(0..2)).collect();
    let weights: Vec<f64> = (0..30).map(|_| rng.random_range(0.2..3.0)).collect();
    let (_, g) = weighted_cross_entropy(&logits, &labels, &weights).unwrap();
    out.push((
        "weighted_cross_entropy",
        finite_diff_check(
            |v| {
                let t = Tensor::from_vec(logits.shape(), v.to_vec()).unwrap();
                weighted_cross_entropy(&t, &labels, &weights).unwrap().0
            },
            logits.data(),
            g.data(),
            EPS,
        ),
    ));
    out
}

pub fn tiny_unet(reps: &[Representation], depth: usize, width: usize) -> UNetConfig {
    UNetConfig::new(
        reps.iter().map(|&r| BranchSpec::new(r)).collect(),
        depth,
        width,
    )
}

/// Random 8×8 inputs, striped labels and balanced weights.
pub fn tiny_batch(c: &UNetConfig, seed: u64) -> (Vec<Tensor<f64>>, Vec<u8>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = c
        .branches
        .iter()
        .map(|b| {
            Tensor::from_vec(
                &[1, b.in_channels, 8, 8],
                (0..b.in_channels * 64).map(|_| rng.random()).collect(),
            )
            .unwrap()
        })
        .collect();
    let labels: Vec<u8> = (0..64)
        .map(|i| u8::from((i / 8 + i % 8) % 3 == 0))
        .collect();
    let weights = glareseg::nncore::LossWeights::balanced(8, 8, &labels)
        .unwrap()
        .data;
    (inputs, labels, weights)
}

/// Built model with biases jittered off zero so no ReLU sits on its kink.
pub fn jittered_model(c: &UNetConfig, seed: u64) -> Model<f64> {
    let mut model: Model<f64> = build_model(c, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for l in model.layers_mut() {
        for b in l.bias.data_mut() {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    model
}

/// End-to-end finite-difference check over every parameter.
pub fn unet_gradcheck(reps: &[Representation], depth: usize, seed: u64) -> GradCheck {
    let c = tiny_unet(reps, depth, 2);
    let model = jittered_model(&c, seed);
    let (inputs, labels, weights) = tiny_batch(&c, seed + 1);
    let (_, grads) = model.loss_and_grads(&inputs, &labels, &weights).unwrap();
    let mut probe = model.clone();
    finite_diff_check(
        |p| {
            probe.set_flat_params(p).unwrap();
            probe.loss_and_grads(&inputs, &labels, &weights).unwrap().0
        },
        &model.flat_params(),
        &grads.flat(),
        EPS,
    )
}

/// The tiny U-Net configurations covered by the end-to-end check.
pub fn unet_gradcheck_cases() -> Vec<(Vec<Representation>, usize)> {
    use Representation::*;
    vec![
        (vec![Rgb], 1),
        (vec![C], 2),
        (vec![Rgb, G], 1),
        (vec![Hsv, C], 2),
        (vec![Rgb, Hsv, G], 1),
        (vec![Rgb, Hsv, G, C], 2),
    ]
}

// ---------------------------------------------------------------- corpora

/// The frozen synthetic corpus used by the representation and learning checks.
pub const CORPUS_SEED: u64 = 7;

pub fn corpus(count: usize, side: usize) -> Vec<SamplePair> {
    synthesize_glare(
        CORPUS_SEED,
        count,
        Resolution::square(side),
        &SynthParams::default(),
    )
    .unwrap()
}

/// Mean photometric value inside and outside the glare mask.
pub fn photometric_inside_outside(sample: &SamplePair) -> (f64, f64) {
    let combo: Combo = "G".parse().unwrap();
    let planes = build_plane_set(&sample.image, combo, &ContrastParams::default()).unwrap();
    let g = planes.get(Representation::G).unwrap();
    let hw = g.pixels();
    let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for (i, &m) in sample.mask.data.iter().enumerate() {
        let v = (0..g.channels()).map(|c| g.data()[c * hw + i]).sum::<f64>() / g.channels() as f64;
        if m == 1 {
            inside = (inside.0 + v, inside.1 + 1);
        } else {
            outside = (outside.0 + v, outside.1 + 1);
        }
    }
    (inside.0 / inside.1 as f64, outside.0 / outside.1 as f64)
}

// ---------------------------------------------------------------- table

pub const TABLE1_CSV: &str = include_str!("../fixtures/table1.csv");

/// Published ablation results, one row per column in report order:
/// precision, recall, F1, accuracy means followed by their stds.
const TABLE1: [(&str, [f64; 4], [f64; 4]); 14] = [
    (
        "C",
        [0.3107, 0.5173, 0.3433, 0.8312],
        [0.2355, 0.2702, 0.2107, 0.0788],
    ),
    (
        "RGB",
        [0.4979, 0.5756, 0.4352, 0.8831],
        [0.2875, 0.2620, 0.1838, 0.0836],
    ),
    (
        "HSV",
        [0.4538, 0.6636, 0.4610, 0.8781],
        [0.2589, 0.2240, 0.1750, 0.0714],
    ),
    (
        "G",
        [0.4899, 0.5958, 0.4635, 0.8913],
        [0.2717, 0.2181, 0.1860, 0.0733],
    ),
    (
        "RGB&HSV",
        [0.4634, 0.6866, 0.4698, 0.8693],
        [0.2586, 0.2189, 0.1842, 0.0887],
    ),
    (
        "RGB&G",
        [0.4458, 0.7616, 0.4927, 0.8695],
        [0.2520, 0.1772, 0.1894, 0.0848],
    ),
    (
        "G&HSV",
        [0.5083, 0.6479, 0.4831, 0.8950],
        [0.2628, 0.2365, 0.1739, 0.0647],
    ),
    (
        "RGB&C",
        [0.3904, 0.7487, 0.4358, 0.8313],
        [0.2569, 0.2061, 0.2102, 0.1186],
    ),
    (
        "C&HSV",
        [0.4264, 0.7043, 0.4388, 0.8552],
        [0.2691, 0.2295, 0.1866, 0.0885],
    ),
    (
        "RGB&HSV&C",
        [0.3619, 0.7542, 0.4038, 0.7684],
        [0.2814, 0.2249, 0.2375, 0.2011],
    ),
    (
        "RGB&HSV&G",
        [0.4423, 0.7106, 0.4625, 0.8672],
        [0.2545, 0.2222, 0.1847, 0.0843],
    ),
    (
        "RGB&G&C",
        [0.4498, 0.6897, 0.4693, 0.8750],
        [0.2371, 0.2127, 0.1610, 0.0771],
    ),
    (
        "G&HSV&C",
        [0.4944, 0.6624, 0.4775, 0.8785],
        [0.2664, 0.2222, 0.1879, 0.0852],
    ),
    (
        "RGB&HSV&G&C",
        [0.4428, 0.7048, 0.4662, 0.8706],
        [0.2481, 0.2120, 0.1826, 0.0784],
    ),
];

pub fn table1_report() -> AblationReport {
    AblationReport {
        meta: None,
        columns: TABLE1
            .iter()
            .map(|&(id, mean, std)| ReportColumn {
                combo: id.parse().unwrap(),
                stats: MeanStd {
                    mean: Metrics::from_values(mean),
                    std: Metrics::from_values(std),
                },
            })
            .collect(),
    }
}

/// Largest absolute gap between the stride-4 and dense contrast maps over
/// the frozen corpus (measured 0.968).
pub const STRIDED_MAX_ABS: f64 = 1.0;
/// Mean absolute gap over the same corpus (measured 0.0125).
pub const STRIDED_MEAN_ABS: f64 = 0.015;

/// (max, mean) absolute difference between stride-4 and dense contrast.
pub fn strided_deviation(samples: &[SamplePair]) -> (f64, f64) {
    use glareseg::imgrep::{
        contrast_map, contrast_map_strided, luminance, rgb_to_hsv, value_plane_255,
    };
    let p = ContrastParams::default();
    let (mut worst, mut sum, mut n) = (0.0f64, 0.0, 0usize);
    for s in samples {
        let l = luminance(&value_plane_255(&rgb_to_hsv(&s.image)));
        let dense = contrast_map(&l, &p).unwrap();
        let strided = contrast_map_strided(&l, &p).unwrap();
        for (a, b) in dense.data.iter().zip(&strided.data) {
            worst = worst.max((a - b).abs());
            sum += (a - b).abs();
            n += 1;
        }
    }
    (worst, sum / n as f64)
}
