//! Local luminance contrast: windowed standard deviation over a floored
//! windowed mean.
//!
//! Window sums come from summed-area tables built on values shifted by the
//! first sample, which keeps the `Σx² − (Σx)²/n` form well conditioned and
//! makes constant regions produce exactly zero variance. Windows whose
//! variance falls below the rounding floor of the tables are recomputed
//! directly, so flat windows inside a textured image are exactly zero too.

use serde::{Deserialize, Serialize};

use super::raster::ScalarMap;
use crate::error::{config_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastParams {
    /// Window width in pixels (odd).
    pub window_n: usize,
    /// Window height in pixels (odd).
    pub window_m: usize,
    /// Lattice spacing of the accelerated variant.
    pub stride_k: usize,
    /// Lower bound applied to the windowed mean in the denominator.
    pub luminance_floor: f64,
}

impl Default for ContrastParams {
    fn default() -> Self {
        Self {
            window_n: 17,
            window_m: 17,
            stride_k: 4,
            luminance_floor: 10.0,
        }
    }
}

impl ContrastParams {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("window_n", self.window_n), ("window_m", self.window_m)] {
            if w < 3 || w % 2 == 0 {
                return Err(config_err(format!("{name} must be odd and >= 3, got {w}")));
            }
        }
        if self.stride_k == 0 {
            return Err(config_err("stride_k must be >= 1"));
        }
        if !(self.luminance_floor > 0.0) {
            return Err(config_err("luminance_floor must be positive"));
        }
        Ok(())
    }

    pub fn with_stride(self, stride_k: usize) -> Self {
        Self { stride_k, ..self }
    }
}

struct WindowSums<'a> {
    data: &'a [f64],
    height: usize,
    width: usize,
    half_w: usize,
    half_h: usize,
    shift: f64,
    floor: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    /// Windowed `Σd² − (Σd)²/n` below this is dominated by table rounding.
    noise_floor: f64,
}

impl<'a> WindowSums<'a> {
    fn new(l: &'a ScalarMap, params: &ContrastParams) -> Self {
        let (h, w) = (l.height, l.width);
        let shift = l.data[0];
        let stride = w + 1;
        let mut sum = vec![0.0; (h + 1) * stride];
        let mut sum_sq = vec![0.0; (h + 1) * stride];
        for y in 0..h {
            let mut row = 0.0;
            let mut row_sq = 0.0;
            for x in 0..w {
                let d = l.data[y * w + x] - shift;
                row += d;
                row_sq += d * d;
                let i = (y + 1) * stride + x + 1;
                sum[i] = sum[i - stride] + row;
                sum_sq[i] = sum_sq[i - stride] + row_sq;
            }
        }
        let noise_floor = 1e9 * f64::EPSILON * sum_sq[(h + 1) * stride - 1];
        Self {
            data: &l.data,
            height: h,
            width: w,
            half_w: params.window_n / 2,
            half_h: params.window_m / 2,
            shift,
            floor: params.luminance_floor,
            sum,
            sum_sq,
            noise_floor,
        }
    }

    fn rect(table: &[f64], stride: usize, y0: usize, x0: usize, y1: usize, x1: usize) -> f64 {
        table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0]
            + table[y0 * stride + x0]
    }

    /// Contrast at `(y, x)` over the border-clipped window.
    fn contrast_at(&self, y: usize, x: usize) -> f64 {
        let y0 = y.saturating_sub(self.half_h);
        let x0 = x.saturating_sub(self.half_w);
        let y1 = (y + self.half_h + 1).min(self.height);
        let x1 = (x + self.half_w + 1).min(self.width);
        let count = ((y1 - y0) * (x1 - x0)) as f64;
        let stride = self.width + 1;
        let s = Self::rect(&self.sum, stride, y0, x0, y1, x1);
        let s2 = Self::rect(&self.sum_sq, stride, y0, x0, y1, x1);
        let spread = s2 - s * s / count;
        if spread < self.noise_floor {
            return self.direct(y0, x0, y1, x1);
        }
        let mean = s / count + self.shift;
        (spread / (count - 1.0)).sqrt() / mean.max(self.floor)
    }

    /// Two-pass evaluation over one window.
    fn direct(&self, y0: usize, x0: usize, y1: usize, x1: usize) -> f64 {
        let rows = || (y0..y1).flat_map(|y| &self.data[y * self.width + x0..y * self.width + x1]);
        let first = self.data[y0 * self.width + x0];
        let count = ((y1 - y0) * (x1 - x0)) as f64;
        let mean = rows().sum::<f64>() / count;
        if rows().all(|&v| v == first) {
            return 0.0;
        }
        let var = rows().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        var.sqrt() / mean.max(self.floor)
    }
}

fn check_input(l: &ScalarMap, params: &ContrastParams) -> Result<()> {
    params.validate()?;
    if l.data.len() != l.height * l.width {
        return Err(config_err("luminance map data does not match its geometry"));
    }
    if l.data.len() < 2 {
        return Err(Error::InvalidInput(
            "contrast map needs at least 2 pixels".to_string(),
        ));
    }
    if let Some(v) = l.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite luminance {v}")));
    }
    Ok(())
}

/// Contrast map evaluated at every pixel.
pub fn contrast_map(l_plane: &ScalarMap, params: &ContrastParams) -> Result<ScalarMap> {
    check_input(l_plane, params)?;
    let sums = WindowSums::new(l_plane, params);
    let (h, w) = (l_plane.height, l_plane.width);
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            data.push(sums.contrast_at(y, x));
        }
    }
    ScalarMap::new(h, w, data)
}

/// Sample positions `0, k, 2k, …` plus the final index.
pub(crate) fn lattice(len: usize, k: usize) -> Vec<usize> {
    let mut pts: Vec<usize> = (0..len).step_by(k).collect();
    if *pts.last().expect("len >= 1") != len - 1 {
        pts.push(len - 1);
    }
    pts
}

/// Linearly fills `out[p]` for every `p` from values known at `pts`.
fn interpolate_line(pts: &[usize], known: &[f64], out: &mut [f64]) {
    if pts.len() == 1 {
        out.fill(known[0]);
        return;
    }
    for seg in 0..pts.len() - 1 {
        let (a, b) = (pts[seg], pts[seg + 1]);
        let (va, vb) = (known[seg], known[seg + 1]);
        out[a] = va;
        let span = (b - a) as f64;
        for p in a + 1..b {
            let t = (p - a) as f64 / span;
            out[p] = (1.0 - t) * va + t * vb;
        }
    }
    let last = *pts.last().unwrap();
    out[last] = *known.last().unwrap();
}

/// Contrast map computed exactly on a stride-`k` lattice (last row and
/// column included) and bilinearly interpolated in between. With `k = 1`
/// every pixel is a lattice point and the result equals [`contrast_map`].
pub fn contrast_map_strided(l_plane: &ScalarMap, params: &ContrastParams) -> Result<ScalarMap> {
    check_input(l_plane, params)?;
    let sums = WindowSums::new(l_plane, params);
    let (h, w) = (l_plane.height, l_plane.width);
    let rows = lattice(h, params.stride_k);
    let cols = lattice(w, params.stride_k);

    // Full-width rows at each lattice row.
    let mut lattice_rows = vec![0.0; rows.len() * w];
    let mut known = vec![0.0; cols.len()];
    for (ri, &y) in rows.iter().enumerate() {
        for (ci, &x) in cols.iter().enumerate() {
            known[ci] = sums.contrast_at(y, x);
        }
        interpolate_line(&cols, &known, &mut lattice_rows[ri * w..(ri + 1) * w]);
    }

    let mut data = vec![0.0; h * w];
    let mut column_known = vec![0.0; rows.len()];
    let mut column = vec![0.0; h];
    for x in 0..w {
        for ri in 0..rows.len() {
            column_known[ri] = lattice_rows[ri * w + x];
        }
        interpolate_line(&rows, &column_known, &mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
    ScalarMap::new(h, w, data)
}
