use crate::error::{config_err, Error, Result};

/// Planar multi-channel float raster (`channels × height × width`).
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_planar(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(config_err(format!(
                "raster dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(config_err(format!(
                "raster of {channels}x{height}x{width} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Extracts one channel as a scalar map.
    pub fn channel(&self, c: usize) -> ScalarMap {
        ScalarMap {
            height: self.height,
            width: self.width,
            data: self.plane(c).to_vec(),
        }
    }

    pub fn same_geometry(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }

    /// Samples stored as little-endian `f32`, planar order.
    pub fn to_f32_le_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }
}

/// Single-channel float map (luminance, contrast, probabilities).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(config_err(format!(
                "scalar map of {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl From<ScalarMap> for Raster {
    fn from(m: ScalarMap) -> Self {
        Raster {
            height: m.height,
            width: m.width,
            channels: 1,
            data: m.data,
        }
    }
}

fn check_unit_range(r: &Raster, what: &str) -> Result<()> {
    match r.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::InvalidInput(format!(
            "{what} value {} at index {i} outside [0,1]",
            r.data[i]
        ))),
        None => Ok(()),
    }
}

macro_rules! three_channel_image {
    ($(#[$doc:meta])* $name:ident, $what:literal) => {
        $(#[$doc])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(Raster);

        impl $name {
            /// Wraps a 3-channel raster, checking the [0,1] range.
            pub fn from_raster(raster: Raster) -> Result<Self> {
                if raster.channels() != 3 {
                    return Err(config_err(format!(
                        "{} needs 3 channels, got {}",
                        $what,
                        raster.channels()
                    )));
                }
                check_unit_range(&raster, $what)?;
                Ok(Self(raster))
            }

            pub fn raster(&self) -> &Raster {
                &self.0
            }

            pub fn into_raster(self) -> Raster {
                self.0
            }
        }

        impl std::ops::Deref for $name {
            type Target = Raster;

            fn deref(&self) -> &Raster {
                &self.0
            }
        }
    };
}

three_channel_image!(
    /// RGB image with channels in [0,1].
    RgbImage,
    "RGB image"
);
three_channel_image!(
    /// HSV image; hue is normalized to [0,1) (degrees / 360).
    HsvImage,
    "HSV image"
);
three_channel_image!(
    /// Photometric glare map, jointly rescaled to [0,1].
    PhotometricMap,
    "photometric map"
);

impl RgbImage {
    /// Builds an image from interleaved 8-bit RGB samples.
    pub fn from_rgb8(height: usize, width: usize, interleaved: &[u8]) -> Result<Self> {
        if interleaved.len() != height * width * 3 {
            return Err(config_err(format!(
                "expected {} RGB bytes for {height}x{width}, got {}",
                height * width * 3,
                interleaved.len()
            )));
        }
        let n = height * width;
        let mut data = vec![0.0; 3 * n];
        for (i, px) in interleaved.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * n + i] = f64::from(px[c]) / 255.0;
            }
        }
        Ok(Self(Raster::from_planar(height, width, 3, data)?))
    }

    /// Interleaved 8-bit samples, value×255 rounded half-up.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.pixels();
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            for c in 0..3 {
                out.push(unit_to_u8(self.0.data[c * n + i]));
            }
        }
        out
    }
}

/// Maps a [0,1] value to 8 bits (value×255, rounded half-up, saturating).
pub fn unit_to_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Binary mask, 1 = glare.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(config_err(format!(
                "mask of {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidInput(format!("mask value {v} is not binary")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count_ones() as f64 / self.data.len() as f64
    }

    /// 8-bit view, 0/255.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v * 255).collect()
    }
}
