//! Otsu binarization of probability maps.
//!
//! Probabilities are binned into 256 uniform bins over [0,1]; bin `b`
//! covers `[b/256, (b+1)/256)` and the last bin is closed. A candidate
//! threshold is a bin boundary `t = b/256` for `b` in `1..=255`, splitting
//! bins `< b` (background) from bins `≥ b` (glare). Between-class variance
//! is compared in exact integer arithmetic so ties resolve deterministically
//! to the smallest threshold.

use crate::error::{Error, Result};
use crate::imgrep::{BinaryMask, ScalarMap};

pub const BINS: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram256 {
    pub counts: [u64; BINS],
}

impl Histogram256 {
    pub fn bin_of(v: f64) -> usize {
        ((v * BINS as f64).floor().max(0.0) as usize).min(BINS - 1)
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        let mut counts = [0u64; BINS];
        for &v in values {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "probability {v} outside [0,1]"
                )));
            }
            counts[Self::bin_of(v)] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Between-class variance at boundary `b`, as the exact fraction
    /// `(N·S₀ − n₀·S)² / (n₀·n₁)` over bin indices (proportional to the
    /// variance). `None` when one side is empty.
    pub fn between_class(&self, b: usize) -> Option<(u128, u128)> {
        let n: u64 = self.total();
        let s: u64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| i as u64 * c)
            .sum();
        let n0: u64 = self.counts[..b].iter().sum();
        let s0: u64 = self.counts[..b]
            .iter()
            .enumerate()
            .map(|(i, &c)| i as u64 * c)
            .sum();
        split_score(n, s, n0, s0)
    }
}

fn split_score(n: u64, s: u64, n0: u64, s0: u64) -> Option<(u128, u128)> {
    let n1 = n - n0;
    if n0 == 0 || n1 == 0 {
        return None;
    }
    let d = (n as i128 * s0 as i128 - n0 as i128 * s as i128).unsigned_abs();
    Some((d * d, n0 as u128 * n1 as u128))
}

/// `a.0/a.1 > b.0/b.1`, exact when the cross products fit in 128 bits.
fn greater(a: (u128, u128), b: (u128, u128)) -> bool {
    match (a.0.checked_mul(b.1), b.0.checked_mul(a.1)) {
        (Some(l), Some(r)) => l > r,
        _ => a.0 as f64 / a.1 as f64 > b.0 as f64 / b.1 as f64,
    }
}

/// Boundary bin maximizing between-class variance (smallest on ties), or
/// `None` when every value falls in one bin.
pub fn otsu_bin(hist: &Histogram256) -> Option<usize> {
    let n = hist.total();
    let s: u64 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u64 * c)
        .sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(usize, (u128, u128))> = None;
    for b in 1..BINS {
        n0 += hist.counts[b - 1];
        s0 += (b as u64 - 1) * hist.counts[b - 1];
        if let Some(score) = split_score(n, s, n0, s0) {
            if best.is_none_or(|(_, bs)| greater(score, bs)) {
                best = Some((b, score));
            }
        }
    }
    best.map(|(b, _)| b)
}

/// Otsu threshold of a probability map; `1.0` when all values share a bin.
pub fn otsu_threshold(prob_map: &ScalarMap) -> Result<f64> {
    if prob_map.is_empty() {
        return Err(Error::InvalidInput("empty probability map".into()));
    }
    let hist = Histogram256::from_values(&prob_map.data)?;
    Ok(otsu_bin(&hist).map_or(1.0, |b| b as f64 / BINS as f64))
}

/// Glare wherever `prob ≥ t`.
pub fn binarize(prob_map: &ScalarMap, t: f64) -> BinaryMask {
    BinaryMask {
        height: prob_map.height,
        width: prob_map.width,
        data: prob_map.data.iter().map(|&p| u8::from(p >= t)).collect(),
    }
}

/// Otsu threshold then binarization; a map without two separable classes
/// yields an empty mask.
pub fn segment(prob_map: &ScalarMap) -> Result<(f64, BinaryMask)> {
    let t = otsu_threshold(prob_map)?;
    let mask = if t >= 1.0 {
        BinaryMask::empty(prob_map.height, prob_map.width)
    } else {
        binarize(prob_map, t)
    };
    Ok((t, mask))
}
