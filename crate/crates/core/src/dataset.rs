//! On-disk dataset model: a newline-delimited manifest pairing each image
//! with its salience mask, plus PNG/JPEG loading and PNG saving.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{compute_bounding_box, BoundingBox, ImageBuffer, SalienceMask};

/// One manifest line. Paths are stored as written and resolved against the
/// manifest's directory when relative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub image_path: String,
    pub mask_path: String,
}

/// Ordered list of manifest records. The position of a record is the sample
/// index used by synthesis, so order is preserved everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    base_dir: PathBuf,
    records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(base_dir: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (idx, rec) in records.iter().enumerate() {
            validate_id(&rec.id)?;
            if let Some(first) = seen.insert(&rec.id, idx + 1) {
                return Err(Error::DuplicateId {
                    id: rec.id.clone(),
                    first,
                    second: idx + 1,
                });
            }
        }
        Ok(Self {
            base_dir: base_dir.into(),
            records,
        })
    }

    /// Reads a manifest: one flat JSON object per line with keys `id`,
    /// `image_path`, and `mask_path`. Blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut records = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord =
                serde_json::from_str(line).map_err(|e| Error::ManifestParse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })?;
            validate_id(&rec.id)?;
            if let Some(first) = seen.insert(rec.id.clone(), line_no) {
                return Err(Error::DuplicateId {
                    id: rec.id.clone(),
                    first,
                    second: line_no,
                });
            }
            records.push(rec);
        }
        Ok(Self { base_dir, records })
    }

    /// Writes the records back out, one JSON object per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut out = String::new();
        for rec in &self.records {
            // Serialization of a flat struct cannot fail.
            out.push_str(&serde_json::to_string(rec).expect("manifest record"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        let p = Path::new(relative);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn validate_id(id: &str) -> Result<()> {
    let reason = if id.is_empty() {
        Some("empty")
    } else if id.contains(['/', '\\']) || id == ".." || id == "." {
        Some("path separators are not allowed")
    } else if id.contains([',', '\n', '\r', '\t']) {
        Some("separator characters are not allowed")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(Error::InvalidId {
            id: id.to_string(),
            reason,
        }),
        None => Ok(()),
    }
}

/// A sample loaded into memory. `bbox` is `None` when the mask has no
/// salient pixel.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub id: String,
    pub image: ImageBuffer,
    pub mask: SalienceMask,
    pub bbox: Option<BoundingBox>,
}

/// Decodes an image as RGB. Grayscale inputs are promoted by channel
/// replication and any alpha channel is dropped.
pub fn load_image_rgb(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    let rgb = img.to_rgb8();
    ImageBuffer::from_raw(rgb.width(), rgb.height(), 3, rgb.into_raw())
}

/// Decodes a grayscale map without altering its values. Used for predicted
/// salience maps, which are not binary.
pub fn load_gray(path: &Path) -> Result<SalienceMask> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    let gray = img.to_luma8();
    SalienceMask::from_raw(gray.width(), gray.height(), gray.into_raw())
}

/// Decodes a ground-truth mask, snapping it to {0, 255} at the midpoint:
/// values of 128 and above count as salient.
pub fn load_mask_binary(path: &Path) -> Result<SalienceMask> {
    let mut mask = load_gray(path)?;
    for v in mask.data_mut() {
        *v = if *v >= 128 { 255 } else { 0 };
    }
    Ok(mask)
}

pub fn save_image_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let color = match img.channels() {
        1 => image::ExtendedColorType::L8,
        _ => image::ExtendedColorType::Rgb8,
    };
    image::save_buffer(path, img.data(), img.width(), img.height(), color)
        .map_err(|e| Error::image(path, e))
}

pub fn save_mask_png(mask: &SalienceMask, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    image::save_buffer(
        path,
        mask.data(),
        mask.width(),
        mask.height(),
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::image(path, e))
}

/// Loads one record, checking that mask and image dimensions agree.
pub fn load_sample(manifest: &DatasetManifest, record: &ManifestRecord) -> Result<LabeledSample> {
    let image = load_image_rgb(&manifest.resolve(&record.image_path))?;
    let mask = load_mask_binary(&manifest.resolve(&record.mask_path))?;
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::MaskImageMismatch {
            image_w: image.width(),
            image_h: image.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    let bbox = match compute_bounding_box(&mask) {
        Ok(b) => Some(b),
        Err(Error::NonSalientMask) => None,
        Err(e) => return Err(e),
    };
    Ok(LabeledSample {
        id: record.id.clone(),
        image,
        mask,
        bbox,
    })
}

/// Writes `images/<id>.png` and `masks/<id>.png` under `dir` and returns the
/// manifest record pointing at them.
pub fn save_sample(sample: &LabeledSample, dir: &Path) -> Result<ManifestRecord> {
    let image_rel = format!("images/{}.png", sample.id);
    let mask_rel = format!("masks/{}.png", sample.id);
    save_image_png(&sample.image, &dir.join(&image_rel))?;
    save_mask_png(&sample.mask, &dir.join(&mask_rel))?;
    Ok(ManifestRecord {
        id: sample.id.clone(),
        image_path: image_rel,
        mask_path: mask_rel,
    })
}
