//! Procedural glare corpus.
//!
//! Each sample is a textured background (value noise over a two-colour
//! gradient, a few high-frequency patches, and bright saturated
//! distractor disks) overlaid with 1 to 3 near-white glare disks whose
//! edges fall off like a Gaussian, optionally with a linear streak. The
//! mask is every pixel where the combined glare alpha exceeds 0.5.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Resolution, SamplePair};
use crate::error::{config_err, Error, Result};
use crate::imgrep::{hsv_to_rgb_pixel, unit_to_u8, BinaryMask, RgbImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub min_blobs: usize,
    pub max_blobs: usize,
    /// Blob radius range as a fraction of the shorter image side.
    pub radius: (f64, f64),
    pub streak_probability: f64,
    pub max_distractors: usize,
    /// Accepted range of the glare pixel fraction.
    pub glare_fraction: (f64, f64),
    /// Std of additive pixel noise before quantization.
    pub noise_std: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            min_blobs: 1,
            max_blobs: 3,
            radius: (0.06, 0.16),
            streak_probability: 0.5,
            max_distractors: 2,
            glare_fraction: (0.005, 0.30),
            noise_std: 0.01,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_blobs >= 1
            && self.min_blobs <= self.max_blobs
            && 0.0 < self.radius.0
            && self.radius.0 <= self.radius.1
            && (0.0..=1.0).contains(&self.streak_probability)
            && 0.0 <= self.glare_fraction.0
            && self.glare_fraction.0 < self.glare_fraction.1
            && self.noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(config_err(format!("invalid synthesis parameters {self:?}")))
        }
    }
}

const MAX_ATTEMPTS: usize = 1000;

/// `count` samples named `synth_0000`, `synth_0001`, ... Sample `i`
/// depends only on `seed` and `i`.
pub fn synthesize_glare(
    seed: u64,
    count: usize,
    resolution: Resolution,
    params: &SynthParams,
) -> Result<Vec<SamplePair>> {
    if count == 0 {
        return Err(config_err("count must be at least 1"));
    }
    params.validate()?;
    if resolution.height < 8 || resolution.width < 8 {
        return Err(config_err(format!(
            "resolution {resolution} is too small to synthesize"
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..count).map(|_| master.random()).collect();
    seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            for _ in 0..MAX_ATTEMPTS {
                if let Some((image, mask)) = attempt(&mut rng, resolution, params)? {
                    return Ok(SamplePair {
                        id: format!("synth_{i:04}"),
                        image,
                        mask,
                    });
                }
            }
            Err(Error::InvalidInput(format!(
                "could not place glare within {:?} of {resolution} after {MAX_ATTEMPTS} attempts",
                params.glare_fraction
            )))
        })
        .collect()
}

struct Canvas {
    h: usize,
    w: usize,
    /// Interleaved RGB.
    rgb: Vec<[f64; 3]>,
}

impl Canvas {
    fn blend(&mut self, i: usize, color: [f64; 3], alpha: f64) {
        let px = &mut self.rgb[i];
        for c in 0..3 {
            px[c] = px[c] * (1.0 - alpha) + color[c] * alpha;
        }
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let (r, g, b) = hsv_to_rgb_pixel(h.rem_euclid(1.0), s, v);
    [r, g, b]
}

/// Smoothly interpolated lattice noise in [0,1].
struct ValueNoise {
    cell: f64,
    gw: usize,
    grid: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, h: usize, w: usize, cell: f64) -> Self {
        let gh = (h as f64 / cell).ceil() as usize + 2;
        let gw = (w as f64 / cell).ceil() as usize + 2;
        Self {
            cell,
            gw,
            grid: (0..gh * gw).map(|_| rng.random()).collect(),
        }
    }

    fn at(&self, y: usize, x: usize) -> f64 {
        let (fy, fx) = (y as f64 / self.cell, x as f64 / self.cell);
        let (iy, ix) = (fy.floor() as usize, fx.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (ty, tx) = (smooth(fy - iy as f64), smooth(fx - ix as f64));
        let g = |yy: usize, xx: usize| self.grid[yy * self.gw + xx];
        let top = g(iy, ix) * (1.0 - tx) + g(iy, ix + 1) * tx;
        let bot = g(iy + 1, ix) * (1.0 - tx) + g(iy + 1, ix + 1) * tx;
        top * (1.0 - ty) + bot * ty
    }
}

fn background(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Canvas {
    let side = h.min(w) as f64;
    let base_hue: f64 = rng.random();
    let c1 = hsv(
        base_hue,
        rng.random_range(0.3..0.85),
        rng.random_range(0.25..0.7),
    );
    let c2 = hsv(
        base_hue + rng.random_range(0.1..0.5),
        rng.random_range(0.3..0.85),
        rng.random_range(0.2..0.65),
    );
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = theta.sin_cos();
    let coarse_cell = side / rng.random_range(2.0..5.0);
    let coarse = ValueNoise::new(rng, h, w, coarse_cell);
    let fine_cell = side / rng.random_range(8.0..16.0);
    let fine = ValueNoise::new(rng, h, w, fine_cell);
    let norm = (h as f64 * dy.abs() + w as f64 * dx.abs()).max(1.0);
    let mut rgb = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let t = ((y as f64 * dy + x as f64 * dx) / norm + 0.5).clamp(0.0, 1.0);
            let shade = 0.55 + 0.6 * coarse.at(y, x) + 0.25 * (fine.at(y, x) - 0.5);
            let px = [0, 1, 2].map(|c| ((c1[c] * (1.0 - t) + c2[c] * t) * shade).clamp(0.0, 1.0));
            rgb.push(px);
        }
    }
    let mut canvas = Canvas { h, w, rgb };

    // high-frequency textured patches
    for _ in 0..rng.random_range(1..=4usize) {
        let ph = rng.random_range(0.15..0.45) * h as f64;
        let pw = rng.random_range(0.15..0.45) * w as f64;
        let y0 = rng.random_range(0.0..(h as f64 - ph));
        let x0 = rng.random_range(0.0..(w as f64 - pw));
        let tint = hsv(
            rng.random(),
            rng.random_range(0.4..0.9),
            rng.random_range(0.2..0.6),
        );
        let cell = rng.random_range(1.5..3.5);
        let tex = ValueNoise::new(rng, h, w, cell);
        let amp = rng.random_range(0.15..0.35);
        for y in y0 as usize..(y0 + ph) as usize {
            for x in x0 as usize..(x0 + pw) as usize {
                let n = tex.at(y, x) - 0.5;
                let color = tint.map(|v| (v + amp * 2.0 * n).clamp(0.0, 1.0));
                canvas.blend(y * w + x, color, 0.8);
            }
        }
    }

    // bright, strongly coloured disks
    for _ in 0..rng.random_range(0..=2usize) {
        let color = hsv(
            rng.random(),
            rng.random_range(0.75..1.0),
            rng.random_range(0.85..1.0),
        );
        let r = rng.random_range(0.04..0.12) * side;
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        for y in 0..h {
            for x in 0..w {
                let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                let a = ((r - d) / 1.5 + 0.5).clamp(0.0, 1.0);
                if a > 0.0 {
                    canvas.blend(y * w + x, color, a);
                }
            }
        }
    }
    canvas
}

/// Combined glare alpha and the (per-pixel) glare colour.
fn glare_layer(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    p: &SynthParams,
) -> (Vec<f64>, Vec<[f64; 3]>) {
    let side = h.min(w) as f64;
    let mut keep = vec![1.0f64; h * w];
    let mut color = vec![[1.0; 3]; h * w];
    let ln2 = std::f64::consts::LN_2;
    for _ in 0..rng.random_range(p.min_blobs..=p.max_blobs) {
        let r = rng.random_range(p.radius.0..=p.radius.1) * side;
        let cy = rng.random_range(0.1..0.9) * h as f64;
        let cx = rng.random_range(0.1..0.9) * w as f64;
        let tint = hsv(
            rng.random(),
            rng.random_range(0.0..0.1),
            rng.random_range(0.96..1.0),
        );
        let core = rng.random_range(0.4..0.6) * r;
        let fall = r - core;
        let streak = if rng.random_bool(p.streak_probability) {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::PI);
            Some((
                phi.sin_cos(),
                rng.random_range(2.0..4.0) * r,
                rng.random_range(0.15..0.3) * r,
                rng.random_range(0.6..0.9),
            ))
        } else {
            None
        };
        for y in 0..h {
            for x in 0..w {
                let (ry, rx) = (y as f64 - cy, x as f64 - cx);
                let d = (ry * ry + rx * rx).sqrt();
                // alpha is 1 inside the core and 0.5 at radius r
                let mut a = if d <= core {
                    1.0
                } else {
                    (-ln2 * ((d - core) / fall).powi(2)).exp()
                };
                if let Some(((sy, sx), len, half, peak)) = streak {
                    let along = ry * sy + rx * sx;
                    let perp = ry * sx - rx * sy;
                    let fade = (1.0 - along.abs() / len).max(0.0);
                    let s = peak * fade * (-ln2 * (perp / half).powi(2)).exp();
                    a = 1.0 - (1.0 - a) * (1.0 - s);
                }
                if a > 1e-4 {
                    let i = y * w + x;
                    let before = 1.0 - keep[i];
                    keep[i] *= 1.0 - a;
                    let after = 1.0 - keep[i];
                    // colour of the union, weighted by each layer's contribution
                    let wt = (after - before) / after;
                    for c in 0..3 {
                        color[i][c] = color[i][c] * (1.0 - wt) + tint[c] * wt;
                    }
                }
            }
        }
    }
    (keep.into_iter().map(|k| 1.0 - k).collect(), color)
}

fn attempt(
    rng: &mut ChaCha8Rng,
    res: Resolution,
    p: &SynthParams,
) -> Result<Option<(RgbImage, BinaryMask)>> {
    let (h, w) = (res.height, res.width);
    let mut canvas = background(rng, h, w);
    let (alpha, color) = glare_layer(rng, h, w, p);
    let mask: Vec<u8> = alpha.iter().map(|&a| u8::from(a > 0.5)).collect();
    let fraction = mask.iter().filter(|&&m| m == 1).count() as f64 / (h * w) as f64;
    if !(p.glare_fraction.0..=p.glare_fraction.1).contains(&fraction) {
        return Ok(None);
    }
    for (i, (&a, &c)) in alpha.iter().zip(&color).enumerate() {
        canvas.blend(i, c, a);
    }
    let noise = Normal::new(0.0, p.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let bytes: Vec<u8> = canvas
        .rgb
        .iter()
        .flat_map(|px| *px)
        .map(|v| unit_to_u8((v + noise.sample(rng)).clamp(0.0, 1.0)))
        .collect();
    debug_assert_eq!(canvas.h * canvas.w * 3, bytes.len());
    Ok(Some((
        RgbImage::from_rgb8(h, w, &bytes)?,
        BinaryMask::new(h, w, mask)?,
    )))
}
