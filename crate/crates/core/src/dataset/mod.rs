//! Image/mask datasets on disk and the procedural glare corpus.
//!
//! Layout: `<root>/images/<id>.(png|jpg|jpeg)` paired with
//! `<root>/masks/<id>.png` (8-bit grayscale, 255 = glare). A
//! `<root>/manifest.json` file, when present, replaces stem matching.

mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::imageops::{self, FilterType};
use image::{ExtendedColorType, GrayImage, RgbImage as Rgb8};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::imgrep::{BinaryMask, RgbImage};

pub use synth::{synthesize_glare, SynthParams};

/// Mask samples at or above this 8-bit value are glare.
pub const MASK_CUT: u8 = 128;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Target `height × width`; parses from `"256"` or `"256x192"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl Resolution {
    pub fn square(side: usize) -> Self {
        Self {
            height: side,
            width: side,
        }
    }

    pub fn pixels(self) -> usize {
        self.height * self.width
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Self::square(256)
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| config_err(format!("bad resolution {s:?}")))
        };
        match s.split_once(['x', 'X']) {
            Some((h, w)) => Ok(Self {
                height: parse(h)?,
                width: parse(w)?,
            }),
            None => Ok(Self::square(parse(s)?)),
        }
    }
}

/// A decoded image with its ground-truth mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub id: String,
    pub image: RgbImage,
    pub mask: BinaryMask,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the dataset root unless absolute.
    pub image: PathBuf,
    pub mask: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(skip)]
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub resolution: Resolution,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.image)
    }

    pub fn mask_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.mask)
    }

    /// Loads every entry at the manifest resolution, in manifest order.
    pub fn load_all(&self) -> Result<Vec<SamplePair>> {
        self.entries
            .par_iter()
            .map(|e| load_pair(self, e, self.resolution))
            .collect()
    }
}

fn stems_in(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        let Some(ext) = ext.filter(|e| extensions.contains(&e.as_str())) else {
            continue;
        };
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Validation(format!("non UTF-8 file name {}", path.display())))?
            .to_string();
        let rel = PathBuf::from(dir.file_name().expect("named dir"))
            .join(path.file_name().expect("file"));
        if let Some(prev) = out.insert(stem.clone(), rel) {
            return Err(Error::Validation(format!(
                "id {stem:?} appears twice ({} and .{ext})",
                prev.display()
            )));
        }
    }
    Ok(out)
}

/// Pairs images with masks by file stem (or reads `manifest.json`).
/// Entries are ordered by byte-wise id comparison.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let manifest_path = root.join("manifest.json");
    if manifest_path.is_file() {
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.root = root.to_path_buf();
        if m.entries.is_empty() {
            return Err(Error::NoSamples(root.to_path_buf()));
        }
        m.entries
            .sort_by(|a, b| a.id.as_bytes().cmp(b.id.as_bytes()));
        if let Some(w) = m.entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Validation(format!(
                "duplicate id {:?} in manifest",
                w[0].id
            )));
        }
        for e in &m.entries {
            for p in [m.image_path(e), m.mask_path(e)] {
                if !p.is_file() {
                    return Err(Error::io(
                        &p,
                        std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            "listed in manifest.json",
                        ),
                    ));
                }
            }
        }
        return Ok(m);
    }

    let (img_dir, mask_dir) = (root.join("images"), root.join("masks"));
    for d in [&img_dir, &mask_dir] {
        if !d.is_dir() {
            return Err(Error::io(
                d,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory missing"),
            ));
        }
    }
    let images = stems_in(&img_dir, &IMAGE_EXTENSIONS)?;
    let masks = stems_in(&mask_dir, &["png"])?;
    let orphan_images: Vec<_> = images.keys().filter(|k| !masks.contains_key(*k)).collect();
    let orphan_masks: Vec<_> = masks.keys().filter(|k| !images.contains_key(*k)).collect();
    if !orphan_images.is_empty() || !orphan_masks.is_empty() {
        let mut parts = Vec::new();
        if !orphan_images.is_empty() {
            parts.push(format!("images without mask: {orphan_images:?}"));
        }
        if !orphan_masks.is_empty() {
            parts.push(format!("masks without image: {orphan_masks:?}"));
        }
        return Err(Error::Validation(parts.join("; ")));
    }
    if images.is_empty() {
        return Err(Error::NoSamples(root.to_path_buf()));
    }
    // BTreeMap<String, _> iterates in byte-wise order.
    let entries = images
        .into_iter()
        .map(|(id, image)| {
            let mask = masks[&id].clone();
            ManifestEntry { id, image, mask }
        })
        .collect();
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        entries,
        resolution: Resolution::default(),
    })
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads an RGB image, normalized to [0,1], optionally resized bilinearly.
pub fn load_rgb(path: &Path, target: Option<Resolution>) -> Result<RgbImage> {
    let mut img = decode(path)?.to_rgb8();
    if let Some(t) = target {
        if (img.height() as usize, img.width() as usize) != (t.height, t.width) {
            img = imageops::resize(&img, t.width as u32, t.height as u32, FilterType::Triangle);
        }
    }
    RgbImage::from_rgb8(img.height() as usize, img.width() as usize, img.as_raw())
}

/// Reads an 8-bit mask (nearest-neighbour resize), binarized at [`MASK_CUT`].
pub fn load_mask(path: &Path, target: Option<Resolution>) -> Result<BinaryMask> {
    let mut m = decode(path)?.to_luma8();
    if let Some(t) = target {
        if (m.height() as usize, m.width() as usize) != (t.height, t.width) {
            m = imageops::resize(&m, t.width as u32, t.height as u32, FilterType::Nearest);
        }
    }
    Ok(binarize_gray(
        m.height() as usize,
        m.width() as usize,
        m.as_raw(),
    ))
}

pub fn binarize_gray(height: usize, width: usize, gray: &[u8]) -> BinaryMask {
    BinaryMask {
        height,
        width,
        data: gray.iter().map(|&v| u8::from(v >= MASK_CUT)).collect(),
    }
}

pub fn load_pair(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    target: Resolution,
) -> Result<SamplePair> {
    let image = load_rgb(&manifest.image_path(entry), Some(target))?;
    let mask = load_mask(&manifest.mask_path(entry), Some(target))?;
    Ok(SamplePair {
        id: entry.id.clone(),
        image,
        mask,
    })
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn save_rgb_png(path: &Path, image: &RgbImage) -> Result<()> {
    let buf = Rgb8::from_raw(image.width() as u32, image.height() as u32, image.to_rgb8())
        .expect("buffer sized from image");
    buf.save(path).map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn save_gray_png(path: &Path, height: usize, width: usize, gray: Vec<u8>) -> Result<()> {
    let buf = GrayImage::from_raw(width as u32, height as u32, gray)
        .ok_or_else(|| config_err(format!("{height}x{width} gray buffer has wrong length")))?;
    image::save_buffer(
        path,
        buf.as_raw(),
        width as u32,
        height as u32,
        ExtendedColorType::L8,
    )
    .map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes samples in the standard layout (`images/<id>.png`,
/// `masks/<id>.png`) and returns the resulting manifest.
pub fn write_dataset(root: impl AsRef<Path>, samples: &[SamplePair]) -> Result<DatasetManifest> {
    let root = root.as_ref();
    create_dir(&root.join("images"))?;
    create_dir(&root.join("masks"))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let image = PathBuf::from("images").join(format!("{}.png", s.id));
        let mask = PathBuf::from("masks").join(format!("{}.png", s.id));
        save_rgb_png(&root.join(&image), &s.image)?;
        save_gray_png(
            &root.join(&mask),
            s.mask.height,
            s.mask.width,
            s.mask.to_gray8(),
        )?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            image,
            mask,
        });
    }
    entries.sort_by(|a, b| a.id.as_bytes().cmp(b.id.as_bytes()));
    let resolution = samples
        .first()
        .map(|s| Resolution {
            height: s.image.height(),
            width: s.image.width(),
        })
        .unwrap_or_default();
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        entries,
        resolution,
    })
}

/// Per-sample findings of [`validate_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleCheck {
    pub id: String,
    pub image_size: (usize, usize),
    pub mask_size: (usize, usize),
    pub glare_fraction: f64,
    /// Mask samples that are neither 0 nor 255.
    pub non_binary_values: usize,
    pub issues: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub samples: Vec<SampleCheck>,
}

impl ValidationReport {
    pub fn issue_count(&self) -> usize {
        self.samples.iter().map(|s| s.issues.len()).sum()
    }
}

/// Scans and decodes every pair at native size, flagging geometry
/// mismatches, odd mask encodings and glare-free masks.
pub fn validate_dataset(root: impl AsRef<Path>) -> Result<ValidationReport> {
    let manifest = scan_dataset(root)?;
    let samples = manifest
        .entries
        .par_iter()
        .map(|e| {
            let image = decode(&manifest.image_path(e))?;
            let gray = decode(&manifest.mask_path(e))?.to_luma8();
            let image_size = (image.height() as usize, image.width() as usize);
            let mask_size = (gray.height() as usize, gray.width() as usize);
            let non_binary_values = gray
                .as_raw()
                .iter()
                .filter(|&&v| v != 0 && v != 255)
                .count();
            let mask = binarize_gray(mask_size.0, mask_size.1, gray.as_raw());
            let mut issues = Vec::new();
            if image_size != mask_size {
                issues.push(format!("image is {image_size:?} but mask is {mask_size:?}"));
            }
            if mask.count_ones() == 0 {
                issues.push("mask has no glare pixels".into());
            }
            Ok(SampleCheck {
                id: e.id.clone(),
                image_size,
                mask_size,
                glare_fraction: mask.fraction(),
                non_binary_values,
                issues,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport { samples })
}
