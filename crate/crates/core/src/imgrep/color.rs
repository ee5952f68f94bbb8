use super::raster::{HsvImage, Raster, RgbImage, ScalarMap};

/// Hexcone RGB→HSV for one pixel. Hue is returned in [0,1); an
/// achromatic pixel gets hue 0.
pub fn rgb_to_hsv_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, v);
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = sector / 6.0;
    // rem_euclid can land exactly on 6.0 for tiny negative inputs.
    (if h >= 1.0 { 0.0 } else { h }, s, v)
}

/// Inverse of [`rgb_to_hsv_pixel`].
pub fn hsv_to_rgb_pixel(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = (h * 6.0).rem_euclid(6.0);
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

pub fn rgb_to_hsv(img: &RgbImage) -> HsvImage {
    let n = img.pixels();
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let (h, s, v) = rgb_to_hsv_pixel(r[i], g[i], b[i]);
        data[i] = h;
        data[n + i] = s;
        data[2 * n + i] = v;
    }
    let raster = Raster::from_planar(img.height(), img.width(), 3, data)
        .expect("geometry copied from a valid image");
    HsvImage::from_raster(raster).expect("hexcone HSV stays in [0,1]")
}

pub fn hsv_to_rgb(img: &HsvImage) -> RgbImage {
    let n = img.pixels();
    let (h, s, v) = (img.plane(0), img.plane(1), img.plane(2));
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let (r, g, b) = hsv_to_rgb_pixel(h[i], s[i], v[i]);
        data[i] = r.clamp(0.0, 1.0);
        data[n + i] = g.clamp(0.0, 1.0);
        data[2 * n + i] = b.clamp(0.0, 1.0);
    }
    let raster = Raster::from_planar(img.height(), img.width(), 3, data)
        .expect("geometry copied from a valid image");
    RgbImage::from_raster(raster).expect("clamped")
}

pub const LUMINANCE_GAIN: f64 = 0.02874;
pub const LUMINANCE_GAMMA: f64 = 2.2;

/// Luminance `(0.02874 · V)^2.2` where `V` is the HSV value on a 0–255 scale.
pub fn luminance(v_plane_255: &ScalarMap) -> ScalarMap {
    v_plane_255.map(|v| (LUMINANCE_GAIN * v.max(0.0)).powf(LUMINANCE_GAMMA))
}

/// The HSV value channel rescaled to 0–255, ready for [`luminance`].
pub fn value_plane_255(hsv: &HsvImage) -> ScalarMap {
    hsv.channel(2).map(|v| v * 255.0)
}
