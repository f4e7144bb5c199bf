//! Object synthesis: scale the salient object to a banded share of the
//! background area, rotate it when the orientations clash, pick a placement
//! patch, and blend it in with its soft mask. Every sample draws from its
//! own seeded random stream, so results do not depend on execution order.

pub mod augment;

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{
    load_image_rgb, load_sample, save_sample, DatasetManifest, LabeledSample, ManifestRecord,
};
use crate::error::{Error, Result};
use crate::features::extract_features;
use crate::matcher::{find_best_patch, slice_patches, MatchRow, ScoreKind};
use crate::parallel::with_jobs;
use crate::raster::{BoundingBox, ImageBuffer, SalienceMask};
use crate::rng::sample_rng;

/// Target ranges for the resized-object share of the background area,
/// cycled by sample index.
pub const SIZE_BANDS: [(f64, f64); 3] = [(0.075, 0.1), (0.1, 0.2), (0.2, 0.3)];

/// Mask values at or above this alpha become salient in the output ground
/// truth.
pub const ALPHA_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rotation {
    #[default]
    None,
    Clockwise,
    CounterClockwise,
}

impl Rotation {
    pub fn degrees(self) -> i32 {
        match self {
            Rotation::None => 0,
            Rotation::Clockwise => 90,
            Rotation::CounterClockwise => -90,
        }
    }

    pub fn from_degrees(degrees: i32) -> Result<Self> {
        match degrees {
            0 => Ok(Rotation::None),
            90 => Ok(Rotation::Clockwise),
            -90 => Ok(Rotation::CounterClockwise),
            other => Err(Error::UnknownStrategy {
                kind: "rotation",
                name: other.to_string(),
                known: "0, 90, -90",
            }),
        }
    }
}

/// Scale and orientation decided for one object, before placement.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryPlan {
    pub scale: f64,
    pub rotation: Rotation,
    pub resized_w: u32,
    pub resized_h: u32,
    pub fallback_used: bool,
    pub band: usize,
    pub target_fraction: f64,
}

/// The full recipe for one synthesized sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementPlan {
    pub object_id: String,
    pub background_id: String,
    pub scale: f64,
    pub rotation: Rotation,
    pub anchor: (u32, u32),
    pub resized_w: u32,
    pub resized_h: u32,
    pub fallback_used: bool,
}

pub fn band_range(index: u64) -> (f64, f64) {
    SIZE_BANDS[(index % 3) as usize]
}

/// Scale factor that makes the object's box cover `fraction` of the
/// background area.
pub fn scale_for_fraction(fraction: f64, bg_area: f64, object_area: f64) -> Result<f64> {
    if object_area <= 0.0 {
        return Err(Error::DegenerateObject);
    }
    Ok((fraction * bg_area / object_area).sqrt())
}

/// Draws the target area fraction from the band of `index` and converts it
/// to a scale factor. Returns (scale, fraction).
pub fn sample_scale(
    index: u64,
    rng: &mut ChaCha8Rng,
    bg_area: f64,
    object_area: f64,
) -> Result<(f64, f64)> {
    let (lo, hi) = band_range(index);
    let fraction = rng.gen_range(lo..hi);
    Ok((scale_for_fraction(fraction, bg_area, object_area)?, fraction))
}

/// Half of the largest scale at which the object's extents still fit the
/// background.
pub fn fallback_scale(bg_w: f64, bg_h: f64, object_w: f64, object_h: f64) -> f64 {
    0.5 * (bg_w / object_w).min(bg_h / object_h)
}

fn scaled_dim(pixels: u32, scale: f64) -> u32 {
    (pixels as f64 * scale).round().max(1.0) as u32
}

/// Squares pass as either orientation, so only a strict landscape/portrait
/// clash counts as different.
fn same_orientation(obj_w: u32, obj_h: u32, bg_w: u32, bg_h: u32) -> bool {
    obj_w == obj_h || bg_w == bg_h || ((obj_w > obj_h) == (bg_w > bg_h))
}

/// Decides scale and rotation for one object against one background.
///
/// The sampled scale wins if the resized raster fits. Otherwise the object
/// is shrunk to half the largest fitting scale; if the orientations clash
/// it is first turned a quarter turn, sign drawn from the stream before the
/// final fit check.
pub fn plan_geometry(
    index: u64,
    bbox: &BoundingBox,
    bg_w: u32,
    bg_h: u32,
    rng: &mut ChaCha8Rng,
) -> Result<GeometryPlan> {
    let (ext_w, ext_h) = (bbox.width() as f64, bbox.height() as f64);
    let bg_area = bg_w as f64 * bg_h as f64;
    let (scale, fraction) = sample_scale(index, rng, bg_area, ext_w * ext_h)?;
    let band = (index % 3) as usize;
    let (crop_w, crop_h) = (bbox.pixel_width(), bbox.pixel_height());

    let resized_w = scaled_dim(crop_w, scale);
    let resized_h = scaled_dim(crop_h, scale);
    if resized_w <= bg_w && resized_h <= bg_h {
        return Ok(GeometryPlan {
            scale,
            rotation: Rotation::None,
            resized_w,
            resized_h,
            fallback_used: false,
            band,
            target_fraction: fraction,
        });
    }

    let (rotation, fb_ext, fb_crop) = if same_orientation(crop_w, crop_h, bg_w, bg_h) {
        (Rotation::None, (ext_w, ext_h), (crop_w, crop_h))
    } else {
        let rotation = if rng.gen::<bool>() {
            Rotation::Clockwise
        } else {
            Rotation::CounterClockwise
        };
        (rotation, (ext_h, ext_w), (crop_h, crop_w))
    };
    let scale = fallback_scale(bg_w as f64, bg_h as f64, fb_ext.0, fb_ext.1);
    let resized_w = scaled_dim(fb_crop.0, scale);
    let resized_h = scaled_dim(fb_crop.1, scale);
    if resized_w > bg_w || resized_h > bg_h {
        return Err(Error::CannotFit { bg_w, bg_h });
    }
    Ok(GeometryPlan {
        scale,
        rotation,
        resized_w,
        resized_h,
        fallback_used: true,
        band,
        target_fraction: fraction,
    })
}

/// A real-valued object mask, kept soft so compositing can blend edges.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl AlphaMap {
    pub fn from_mask(mask: &SalienceMask) -> Self {
        let values = (0..mask.height())
            .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
            .map(|(x, y)| mask.get(x, y) as f64 / 255.0)
            .collect();
        Self {
            width: mask.width(),
            height: mask.height(),
            values,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[(y * self.width + x) as usize]
    }

    /// Hardens the soft mask into the output ground truth.
    pub fn to_mask(&self) -> SalienceMask {
        let mut mask = SalienceMask::new(self.width, self.height).expect("alpha dims");
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) >= ALPHA_THRESHOLD {
                    mask.set(x, y, 255);
                }
            }
        }
        mask
    }
}

/// Quarter-turn index mapping: output size and the source pixel for each
/// output pixel.
fn rotated_dims(w: u32, h: u32, rotation: Rotation) -> (u32, u32) {
    match rotation {
        Rotation::None => (w, h),
        _ => (h, w),
    }
}

fn source_pixel(x: u32, y: u32, in_w: u32, in_h: u32, rotation: Rotation) -> (u32, u32) {
    match rotation {
        Rotation::None => (x, y),
        Rotation::Clockwise => (y, in_h - 1 - x),
        Rotation::CounterClockwise => (in_w - 1 - y, x),
    }
}

pub fn rotate_image(image: &ImageBuffer, rotation: Rotation) -> ImageBuffer {
    let (out_w, out_h) = rotated_dims(image.width(), image.height(), rotation);
    let mut out = ImageBuffer::new(out_w, out_h, image.channels()).expect("rotated dims");
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = source_pixel(x, y, image.width(), image.height(), rotation);
            for c in 0..image.channels() {
                out.set(x, y, c, image.get(sx, sy, c));
            }
        }
    }
    out
}

pub fn rotate_alpha(alpha: &AlphaMap, rotation: Rotation) -> AlphaMap {
    let (out_w, out_h) = rotated_dims(alpha.width, alpha.height, rotation);
    let values = (0..out_h)
        .flat_map(|y| (0..out_w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let (sx, sy) = source_pixel(x, y, alpha.width, alpha.height, rotation);
            alpha.get(sx, sy)
        })
        .collect();
    AlphaMap {
        width: out_w,
        height: out_h,
        values,
    }
}

/// Separable bilinear sampling with pixel centers at integer coordinates.
/// Destination pixel centers map to `(dst + 0.5) * scale - 0.5`, which makes
/// equal input and output sizes an exact identity.
fn resize_plane(
    src_w: u32,
    src_h: u32,
    dst_w: u32,
    dst_h: u32,
    sample: impl Fn(u32, u32) -> f64,
) -> Vec<f64> {
    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    let mut out = Vec::with_capacity((dst_w * dst_h) as usize);
    for dy in 0..dst_h {
        let fy = ((dy as f64 + 0.5) * sy - 0.5).clamp(0.0, (src_h - 1) as f64);
        let y0 = fy.floor() as u32;
        let y1 = (y0 + 1).min(src_h - 1);
        let ty = fy - y0 as f64;
        for dx in 0..dst_w {
            let fx = ((dx as f64 + 0.5) * sx - 0.5).clamp(0.0, (src_w - 1) as f64);
            let x0 = fx.floor() as u32;
            let x1 = (x0 + 1).min(src_w - 1);
            let tx = fx - x0 as f64;
            let top = sample(x0, y0) * (1.0 - tx) + sample(x1, y0) * tx;
            let bottom = sample(x0, y1) * (1.0 - tx) + sample(x1, y1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

pub fn resize_image(image: &ImageBuffer, dst_w: u32, dst_h: u32) -> ImageBuffer {
    let mut out = ImageBuffer::new(dst_w, dst_h, image.channels()).expect("resize dims");
    for c in 0..image.channels() {
        let plane = resize_plane(image.width(), image.height(), dst_w, dst_h, |x, y| {
            image.get(x, y, c) as f64
        });
        for y in 0..dst_h {
            for x in 0..dst_w {
                let v = plane[(y * dst_w + x) as usize].round().clamp(0.0, 255.0);
                out.set(x, y, c, v as u8);
            }
        }
    }
    out
}

pub fn resize_alpha(alpha: &AlphaMap, dst_w: u32, dst_h: u32) -> AlphaMap {
    let values = resize_plane(alpha.width, alpha.height, dst_w, dst_h, |x, y| {
        alpha.get(x, y)
    })
    .into_iter()
    .map(|v| v.clamp(0.0, 1.0))
    .collect();
    AlphaMap {
        width: dst_w,
        height: dst_h,
        values,
    }
}

/// Cuts the object to its box and applies the planned rotation, then the
/// planned scale, to both the pixels and the soft mask.
pub fn resample_object(
    sample: &LabeledSample,
    geometry: &GeometryPlan,
) -> Result<(ImageBuffer, AlphaMap)> {
    let bbox = sample.bbox.as_ref().ok_or(Error::NonSalientMask)?;
    let crop = sample.image.crop(
        bbox.x_min,
        bbox.y_min,
        bbox.pixel_width(),
        bbox.pixel_height(),
    )?;
    let mask_crop = sample.mask.crop(
        bbox.x_min,
        bbox.y_min,
        bbox.pixel_width(),
        bbox.pixel_height(),
    )?;
    let alpha = AlphaMap::from_mask(&mask_crop);

    let rotated = rotate_image(&crop, geometry.rotation);
    let rotated_alpha = rotate_alpha(&alpha, geometry.rotation);
    Ok((
        resize_image(&rotated, geometry.resized_w, geometry.resized_h),
        resize_alpha(&rotated_alpha, geometry.resized_w, geometry.resized_h),
    ))
}

/// Blends the object into the background at `anchor` and builds the new
/// ground truth. Pixels with zero alpha keep their background bytes.
pub fn composite(
    background: &ImageBuffer,
    object: &ImageBuffer,
    alpha: &AlphaMap,
    anchor: (u32, u32),
) -> Result<(ImageBuffer, SalienceMask)> {
    if object.width() != alpha.width() || object.height() != alpha.height() {
        return Err(Error::MaskImageMismatch {
            image_w: object.width(),
            image_h: object.height(),
            mask_w: alpha.width(),
            mask_h: alpha.height(),
        });
    }
    if object.channels() != background.channels() {
        return Err(Error::ChannelMismatch {
            expected: background.channels(),
            got: object.channels(),
        });
    }
    let (ax, ay) = anchor;
    let in_bounds = ax
        .checked_add(object.width())
        .is_some_and(|right| right <= background.width())
        && ay
            .checked_add(object.height())
            .is_some_and(|bottom| bottom <= background.height());
    if !in_bounds {
        return Err(Error::PlacementOutOfBounds {
            x: ax,
            y: ay,
            obj_w: object.width(),
            obj_h: object.height(),
            bg_w: background.width(),
            bg_h: background.height(),
        });
    }

    let mut image = background.clone();
    let mut mask = SalienceMask::new(background.width(), background.height()).expect("bg dims");
    for y in 0..object.height() {
        for x in 0..object.width() {
            let a = alpha.get(x, y);
            let (bx, by) = (ax + x, ay + y);
            for c in 0..background.channels() {
                let obj = object.get(x, y, c) as f64;
                let bg = background.get(bx, by, c) as f64;
                let blended = (a * obj + (1.0 - a) * bg).round().clamp(0.0, 255.0);
                image.set(bx, by, c, blended as u8);
            }
            if a >= ALPHA_THRESHOLD {
                mask.set(bx, by, 255);
            }
        }
    }
    Ok((image, mask))
}

#[derive(Debug, Default)]
pub struct SynthesisOutput {
    pub records: Vec<ManifestRecord>,
    pub plans: Vec<PlacementPlan>,
    pub failures: Vec<(String, Error)>,
}

/// Builds one synthesized sample per object and writes images, masks,
/// `manifest.jsonl`, and `provenance.csv` under `out_dir`. Each sample
/// seeds its own random stream with its manifest index, so any worker
/// count yields identical bytes.
pub fn synthesize(
    objects: &DatasetManifest,
    backgrounds: &DatasetManifest,
    matches: &[MatchRow],
    seed: u64,
    score: ScoreKind,
    jobs: usize,
    out_dir: &Path,
) -> Result<SynthesisOutput> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let match_map: HashMap<&str, &MatchRow> = matches
        .iter()
        .map(|row| (row.object_id.as_str(), row))
        .collect();
    let background_map: HashMap<&str, &ManifestRecord> = backgrounds
        .records()
        .iter()
        .map(|record| (record.id.as_str(), record))
        .collect();

    let results: Vec<(String, Result<(ManifestRecord, PlacementPlan)>)> = with_jobs(jobs, || {
        objects
            .records()
            .par_iter()
            .enumerate()
            .map(|(index, record)| {
                let result = synthesize_one(
                    objects,
                    backgrounds,
                    record,
                    index as u64,
                    &match_map,
                    &background_map,
                    seed,
                    score,
                    out_dir,
                );
                (record.id.clone(), result)
            })
            .collect()
    });

    let mut output = SynthesisOutput::default();
    for (id, result) in results {
        match result {
            Ok((record, plan)) => {
                output.records.push(record);
                output.plans.push(plan);
            }
            Err(e) => {
                log::warn!("stage=synth id={id} event=fail error={e}");
                output.failures.push((id, e));
            }
        }
    }
    DatasetManifest::new(out_dir, output.records.clone())?.save(&out_dir.join("manifest.jsonl"))?;
    write_provenance(&output.plans, &out_dir.join("provenance.csv"))?;
    Ok(output)
}

#[allow(clippy::too_many_arguments)]
fn synthesize_one(
    objects: &DatasetManifest,
    backgrounds: &DatasetManifest,
    record: &ManifestRecord,
    index: u64,
    match_map: &HashMap<&str, &MatchRow>,
    background_map: &HashMap<&str, &ManifestRecord>,
    seed: u64,
    score: ScoreKind,
    out_dir: &Path,
) -> Result<(ManifestRecord, PlacementPlan)> {
    let mut rng = sample_rng(seed, index);
    let sample = load_sample(objects, record)?;
    let row = match_map
        .get(record.id.as_str())
        .ok_or_else(|| Error::MissingMatch {
            object_id: record.id.clone(),
        })?;
    let bg_record =
        background_map
            .get(row.background_id.as_str())
            .ok_or_else(|| Error::MissingBackground {
                background_id: row.background_id.clone(),
                object_id: record.id.clone(),
            })?;
    let background = load_image_rgb(&backgrounds.resolve(&bg_record.image_path))?;

    let bbox = sample.bbox.as_ref().ok_or(Error::NonSalientMask)?;
    let geometry = plan_geometry(
        index,
        bbox,
        background.width(),
        background.height(),
        &mut rng,
    )?;
    let (object, alpha) = resample_object(&sample, &geometry)?;

    // The placement score compares the transformed object (its pixels under
    // the hardened mask) against whole, unmasked background patches.
    let object_features = extract_features(&object, Some(&alpha.to_mask()))?;
    let grid = slice_patches(
        background.width(),
        background.height(),
        object.width(),
        object.height(),
    )?;
    let anchor = find_best_patch(&object_features, &background, &grid, score)?;
    let (image, mask) = composite(&background, &object, &alpha, anchor)?;

    let out_record = save_sample(
        &LabeledSample {
            id: sample.id,
            image,
            mask,
            bbox: None,
        },
        out_dir,
    )?;
    let plan = PlacementPlan {
        object_id: record.id.clone(),
        background_id: row.background_id.clone(),
        scale: geometry.scale,
        rotation: geometry.rotation,
        anchor,
        resized_w: geometry.resized_w,
        resized_h: geometry.resized_h,
        fallback_used: geometry.fallback_used,
    };
    Ok((out_record, plan))
}

const PROVENANCE_HEADER: &str =
    "object_id,background_id,scale,rotation,anchor_x,anchor_y,resized_w,resized_h,fallback_used";

/// Writes one row per synthesized sample with the full placement recipe.
pub fn write_provenance(plans: &[PlacementPlan], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = String::from(PROVENANCE_HEADER);
    text.push('\n');
    for plan in plans {
        text.push_str(&format!(
            "{},{},{:.16e},{},{},{},{},{},{}\n",
            plan.object_id,
            plan.background_id,
            plan.scale,
            plan.rotation.degrees(),
            plan.anchor.0,
            plan.anchor.1,
            plan.resized_w,
            plan.resized_h,
            plan.fallback_used,
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_provenance(path: &Path) -> Result<Vec<PlacementPlan>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_error = |line: usize, message: String| Error::TableParse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == PROVENANCE_HEADER => {}
        Some((_, header)) => {
            return Err(parse_error(1, format!("unexpected header {header:?}")));
        }
        None => return Err(parse_error(1, "empty file".to_string())),
    }
    let mut plans = Vec::new();
    for (index, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(parse_error(
                index + 1,
                format!("expected 9 fields, found {}", fields.len()),
            ));
        }
        let parse = |field: &str, name: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .map_err(|e| parse_error(index + 1, format!("bad {name} value {field:?}: {e}")))
        };
        let int = |field: &str, name: &str| -> Result<u32> {
            field
                .parse::<u32>()
                .map_err(|e| parse_error(index + 1, format!("bad {name} value {field:?}: {e}")))
        };
        let degrees = fields[3]
            .parse::<i32>()
            .map_err(|e| parse_error(index + 1, format!("bad rotation {:?}: {e}", fields[3])))?;
        let fallback = match fields[8] {
            "true" => true,
            "false" => false,
            other => {
                return Err(parse_error(
                    index + 1,
                    format!("bad fallback_used value {other:?}"),
                ))
            }
        };
        plans.push(PlacementPlan {
            object_id: fields[0].to_string(),
            background_id: fields[1].to_string(),
            scale: parse(fields[2], "scale")?,
            rotation: Rotation::from_degrees(degrees)?,
            anchor: (int(fields[4], "anchor_x")?, int(fields[5], "anchor_y")?),
            resized_w: int(fields[6], "resized_w")?,
            resized_h: int(fields[7], "resized_h")?,
            fallback_used: fallback,
        });
    }
    Ok(plans)
}
