use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::color::{luminance, rgb_to_hsv, value_plane_255};
use super::contrast::{contrast_map_strided, ContrastParams};
use super::photometric::photometric_map;
use super::raster::{Raster, RgbImage};
use crate::error::{config_err, Error, Result};

/// One input representation of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Representation {
    Rgb,
    Hsv,
    /// Photometric map.
    G,
    /// Contrast map.
    C,
}

impl Representation {
    /// Canonical branch order.
    pub const ALL: [Representation; 4] = [Self::Rgb, Self::Hsv, Self::G, Self::C];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rgb => "RGB",
            Self::Hsv => "HSV",
            Self::G => "G",
            Self::C => "C",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            Self::C => 1,
            _ => 3,
        }
    }

    fn bit(self) -> u8 {
        match self {
            Self::Rgb => 1,
            Self::Hsv => 2,
            Self::G => 4,
            Self::C => 8,
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RGB" => Ok(Self::Rgb),
            "HSV" => Ok(Self::Hsv),
            "G" => Ok(Self::G),
            "C" => Ok(Self::C),
            other => Err(config_err(format!("unknown representation '{other}'"))),
        }
    }
}

impl Serialize for Representation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Representation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A representation combination from the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Combo(u8);

/// Ablation columns in report order, with their labels.
const TABLE_COLUMNS: [(&str, u8); 14] = [
    ("C", 8),
    ("RGB", 1),
    ("HSV", 2),
    ("G", 4),
    ("RGB+HSV", 1 | 2),
    ("RGB+G", 1 | 4),
    ("G+HSV", 4 | 2),
    ("RGB+C", 1 | 8),
    ("C+HSV", 8 | 2),
    ("RGB+HSV+C", 1 | 2 | 8),
    ("RGB+HSV+G", 1 | 2 | 4),
    ("RGB+G+C", 1 | 4 | 8),
    ("G+HSV+C", 4 | 2 | 8),
    ("RGB+HSV+G+C", 1 | 2 | 4 | 8),
];

impl Combo {
    /// The 14 ablation combinations in report column order.
    pub fn table_order() -> Vec<Combo> {
        TABLE_COLUMNS.iter().map(|&(_, bits)| Combo(bits)).collect()
    }

    pub fn from_representations(reps: &[Representation]) -> Result<Self> {
        let mut bits = 0u8;
        for r in reps {
            if bits & r.bit() != 0 {
                return Err(config_err(format!("representation {r} listed twice")));
            }
            bits |= r.bit();
        }
        if TABLE_COLUMNS.iter().any(|&(_, b)| b == bits) {
            Ok(Combo(bits))
        } else {
            let names: Vec<_> = reps.iter().map(|r| r.name()).collect();
            Err(config_err(format!(
                "combination {} is not one of the 14 ablation combinations",
                names.join("+")
            )))
        }
    }

    pub fn contains(self, r: Representation) -> bool {
        self.0 & r.bit() != 0
    }

    /// Members in canonical branch order (RGB, HSV, G, C).
    pub fn representations(self) -> Vec<Representation> {
        Representation::ALL
            .into_iter()
            .filter(|r| self.contains(*r))
            .collect()
    }

    /// Report label, e.g. `G+HSV`.
    pub fn label(self) -> &'static str {
        TABLE_COLUMNS
            .iter()
            .find(|&&(_, b)| b == self.0)
            .map(|&(l, _)| l)
            .expect("constructed combos are table members")
    }

    pub fn channels(self) -> usize {
        self.representations().iter().map(|r| r.channels()).sum()
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Combo {
    type Err = Error;

    /// Accepts `+`, `&` or `,` separated names in any order.
    fn from_str(s: &str) -> Result<Self> {
        let reps = s
            .split(['+', '&', ','])
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Representation>>>()?;
        if reps.is_empty() {
            return Err(config_err(format!("empty combination id '{s}'")));
        }
        Combo::from_representations(&reps)
    }
}

impl Serialize for Combo {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Combo {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneEntry {
    pub representation: Representation,
    pub raster: Raster,
}

/// The rasters fed to the network for one image, in branch order.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelPlaneSet {
    pub combo: Combo,
    pub entries: Vec<PlaneEntry>,
}

impl PixelPlaneSet {
    pub fn height(&self) -> usize {
        self.entries[0].raster.height()
    }

    pub fn width(&self) -> usize {
        self.entries[0].raster.width()
    }

    pub fn channels(&self) -> usize {
        self.entries.iter().map(|e| e.raster.channels()).sum()
    }

    pub fn get(&self, r: Representation) -> Option<&Raster> {
        self.entries
            .iter()
            .find(|e| e.representation == r)
            .map(|e| &e.raster)
    }
}

/// Computes the representations named by `combo`. HSV and the contrast
/// map are computed whenever the photometric map needs them.
pub fn build_plane_set(
    rgb: &RgbImage,
    combo: Combo,
    params: &ContrastParams,
) -> Result<PixelPlaneSet> {
    params.validate()?;
    let need_c = combo.contains(Representation::C) || combo.contains(Representation::G);
    let need_hsv = need_c || combo.contains(Representation::Hsv);

    let hsv = need_hsv.then(|| rgb_to_hsv(rgb));
    let contrast = match (&hsv, need_c) {
        (Some(hsv), true) => Some(contrast_map_strided(
            &luminance(&value_plane_255(hsv)),
            params,
        )?),
        _ => None,
    };

    let mut entries = Vec::new();
    for rep in combo.representations() {
        let raster = match rep {
            Representation::Rgb => rgb.raster().clone(),
            Representation::Hsv => hsv.as_ref().expect("computed").raster().clone(),
            Representation::G => {
                let hsv = hsv.as_ref().expect("computed");
                photometric_map(rgb, &hsv.channel(1), contrast.as_ref().expect("computed"))?
                    .into_raster()
            }
            Representation::C => contrast.clone().expect("computed").into(),
        };
        entries.push(PlaneEntry {
            representation: rep,
            raster,
        });
    }
    Ok(PixelPlaneSet { combo, entries })
}
