//! Image representations: HSV planes, luminance, local contrast map and
//! photometric map, bundled per image as a [`PixelPlaneSet`].

mod color;
mod contrast;
mod photometric;
mod planes;
mod raster;

pub use color::{
    hsv_to_rgb, hsv_to_rgb_pixel, luminance, rgb_to_hsv, rgb_to_hsv_pixel, value_plane_255,
    LUMINANCE_GAIN, LUMINANCE_GAMMA,
};
pub use contrast::{contrast_map, contrast_map_strided, ContrastParams};
pub use photometric::{photometric_map, rescale};
pub use planes::{build_plane_set, Combo, PixelPlaneSet, PlaneEntry, Representation};
pub use raster::{unit_to_u8, BinaryMask, HsvImage, PhotometricMap, Raster, RgbImage, ScalarMap};
