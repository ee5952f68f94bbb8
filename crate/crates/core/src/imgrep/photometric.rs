use super::raster::{PhotometricMap, Raster, RgbImage, ScalarMap};
use crate::error::{config_err, Result};

/// Joint min-max normalization over every channel and pixel. A constant
/// raster maps to all zeros.
pub fn rescale(raster: &Raster) -> Raster {
    let (lo, hi) = raster
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let mut out = raster.clone();
    let range = hi - lo;
    if !(range > 0.0) {
        out.data_mut().fill(0.0);
        return out;
    }
    for v in out.data_mut() {
        *v = ((*v - lo) / range).clamp(0.0, 1.0);
    }
    out
}

/// Photometric glare map: `RGB · (1 − S) · (1 − clamp(C, 0, 1))` per
/// channel, rescaled jointly to [0,1].
pub fn photometric_map(
    rgb: &RgbImage,
    s_plane: &ScalarMap,
    c_map: &ScalarMap,
) -> Result<PhotometricMap> {
    let (h, w) = (rgb.height(), rgb.width());
    for (name, m) in [("saturation", s_plane), ("contrast", c_map)] {
        if m.height != h || m.width != w {
            return Err(config_err(format!(
                "{name} plane is {}x{}, image is {h}x{w}",
                m.height, m.width
            )));
        }
    }
    let n = h * w;
    let mut raw = Raster::zeros(h, w, 3);
    for c in 0..3 {
        let src = rgb.plane(c);
        let dst = raw.plane_mut(c);
        for i in 0..n {
            dst[i] = src[i] * (1.0 - s_plane.data[i]) * (1.0 - c_map.data[i].clamp(0.0, 1.0));
        }
    }
    PhotometricMap::from_raster(rescale(&raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescale_affine() {
        let r = Raster::from_planar(1, 3, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(rescale(&r).data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn rescale_constant_is_zero() {
        let r = Raster::from_planar(2, 2, 3, vec![0.7; 12]).unwrap();
        assert!(rescale(&r).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_pixels_vanish_white_flat_pixel_is_max() {
        // pixel 0: white, unsaturated, flat; pixel 1: saturated red; pixel 2: dark gray
        let rgb = RgbImage::from_raster(
            Raster::from_planar(1, 3, 3, vec![1.0, 1.0, 0.2, 1.0, 0.0, 0.2, 1.0, 0.0, 0.2])
                .unwrap(),
        )
        .unwrap();
        let s = ScalarMap::new(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        let c = ScalarMap::new(1, 3, vec![0.0, 0.0, 3.0]).unwrap();
        let g = photometric_map(&rgb, &s, &c).unwrap();
        for ch in 0..3 {
            assert_eq!(g.get(ch, 0, 0), 1.0);
            assert_eq!(g.get(ch, 0, 1), 0.0);
            assert_eq!(g.get(ch, 0, 2), 0.0);
        }
    }

    #[test]
    fn geometry_mismatch() {
        let rgb = RgbImage::from_raster(Raster::zeros(2, 2, 3)).unwrap();
        let s = ScalarMap::filled(2, 3, 0.0);
        let c = ScalarMap::filled(2, 2, 0.0);
        assert!(photometric_map(&rgb, &s, &c).is_err());
    }
}
