//! Classical online augmenters used as comparison baselines: horizontal
//! flip and GridMask erasing. Both run behind the [`Augmenter`] trait so
//! the CLI can pick them by name.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{load_sample, save_sample, DatasetManifest, LabeledSample, ManifestRecord};
use crate::error::{Error, Result};
use crate::parallel::with_jobs;
use crate::raster::{ImageBuffer, SalienceMask};
use crate::rng::sample_rng;

/// Mirrors the image and its mask about the vertical axis.
pub fn hflip(image: &ImageBuffer, mask: &SalienceMask) -> Result<(ImageBuffer, SalienceMask)> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::MaskImageMismatch {
            image_w: image.width(),
            image_h: image.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    let w = image.width();
    let mut out_image = image.clone();
    let mut out_mask = mask.clone();
    for y in 0..image.height() {
        for x in 0..w {
            let sx = w - 1 - x;
            for c in 0..image.channels() {
                out_image.set(x, y, c, image.get(sx, y, c));
            }
            out_mask.set(x, y, mask.get(sx, y));
        }
    }
    Ok((out_image, out_mask))
}

/// Square-grid erasing parameters: squares of side `round(period * (1 -
/// keep_ratio))` (at least 1) tile the image with the given period and
/// offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMaskParams {
    pub period: u32,
    pub keep_ratio: f64,
    pub offsets: (u32, u32),
    pub probability: f64,
}

impl GridMaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::GridPeriodTooSmall {
                period: self.period,
            });
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio < 1.0) {
            return Err(Error::KeepRatioOutOfRange {
                ratio: self.keep_ratio,
            });
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::ProbabilityOutOfRange {
                value: self.probability,
            });
        }
        Ok(())
    }

    pub fn square_side(&self) -> u32 {
        ((self.period as f64 * (1.0 - self.keep_ratio)).round() as u32).max(1)
    }
}

/// Erases the grid squares from the image with the configured probability
/// (the coin is tossed here, on the caller's stream). Tiling starts one
/// period before the origin so offset squares straddling the top and left
/// edges are not skipped.
pub fn gridmask(
    image: &ImageBuffer,
    params: &GridMaskParams,
    rng: &mut ChaCha8Rng,
) -> Result<ImageBuffer> {
    params.validate()?;
    let mut out = image.clone();
    if !rng.gen_bool(params.probability) {
        return Ok(out);
    }
    let side = params.square_side() as i64;
    let period = params.period as i64;
    let (w, h) = (image.width() as i64, image.height() as i64);
    let tiles = |size: i64, offset: i64| {
        let count = size / period + 2;
        (-1..count).map(move |k| k * period + offset)
    };
    for sy in tiles(h, params.offsets.1 as i64) {
        for sx in tiles(w, params.offsets.0 as i64) {
            for y in sy.max(0)..(sy + side).min(h) {
                for x in sx.max(0)..(sx + side).min(w) {
                    for c in 0..image.channels() {
                        out.set(x as u32, y as u32, c, 0);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// An online transform applied per sample from its own random stream.
pub trait Augmenter: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(
        &self,
        image: &ImageBuffer,
        mask: &SalienceMask,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ImageBuffer, SalienceMask)>;
}

#[derive(Debug, Clone)]
pub struct HorizontalFlip {
    pub probability: f64,
}

impl Augmenter for HorizontalFlip {
    fn name(&self) -> &'static str {
        "hflip"
    }

    fn apply(
        &self,
        image: &ImageBuffer,
        mask: &SalienceMask,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ImageBuffer, SalienceMask)> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::ProbabilityOutOfRange {
                value: self.probability,
            });
        }
        if rng.gen_bool(self.probability) {
            hflip(image, mask)
        } else {
            Ok((image.clone(), mask.clone()))
        }
    }
}

/// GridMask with a per-image period drawn from a range and offsets drawn
/// uniformly inside the period. The mask is left untouched: erasing
/// squares does not move the object.
#[derive(Debug, Clone)]
pub struct RandomGridMask {
    pub period_range: (u32, u32),
    pub keep_ratio: f64,
    pub probability: f64,
}

impl Augmenter for RandomGridMask {
    fn name(&self) -> &'static str {
        "gridmask"
    }

    fn apply(
        &self,
        image: &ImageBuffer,
        mask: &SalienceMask,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ImageBuffer, SalienceMask)> {
        let (lo, hi) = self.period_range;
        if lo < 2 || hi < lo {
            return Err(Error::GridPeriodTooSmall { period: lo.min(hi) });
        }
        let period = rng.gen_range(lo..=hi);
        let offsets = (rng.gen_range(0..period), rng.gen_range(0..period));
        let params = GridMaskParams {
            period,
            keep_ratio: self.keep_ratio,
            offsets,
            probability: self.probability,
        };
        Ok((gridmask(image, &params, rng)?, mask.clone()))
    }
}

/// Tunables for the named augmenters, with the usual defaults.
#[derive(Debug, Clone)]
pub struct AugmenterOptions {
    pub hflip_probability: f64,
    pub gridmask_period: (u32, u32),
    pub gridmask_keep_ratio: f64,
    pub gridmask_probability: f64,
}

impl Default for AugmenterOptions {
    fn default() -> Self {
        Self {
            hflip_probability: 0.5,
            gridmask_period: (96, 224),
            gridmask_keep_ratio: 0.6,
            gridmask_probability: 0.7,
        }
    }
}

pub fn augmenter_names() -> &'static [&'static str] {
    &["hflip", "gridmask"]
}

pub fn create_augmenter(name: &str, options: &AugmenterOptions) -> Result<Box<dyn Augmenter>> {
    match name {
        "hflip" => Ok(Box::new(HorizontalFlip {
            probability: options.hflip_probability,
        })),
        "gridmask" => Ok(Box::new(RandomGridMask {
            period_range: options.gridmask_period,
            keep_ratio: options.gridmask_keep_ratio,
            probability: options.gridmask_probability,
        })),
        other => Err(Error::UnknownStrategy {
            kind: "augmenter",
            name: other.to_string(),
            known: "hflip, gridmask",
        }),
    }
}

#[derive(Debug, Default)]
pub struct AugmentOutcome {
    pub records: Vec<ManifestRecord>,
    pub failures: Vec<(String, Error)>,
}

/// Applies the augmenter to every sample, seeding stream `index` of `seed`
/// per sample, and writes the transformed dataset under `out_dir`.
pub fn augment_dataset(
    manifest: &DatasetManifest,
    augmenter: &dyn Augmenter,
    seed: u64,
    jobs: usize,
    out_dir: &Path,
) -> Result<AugmentOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results: Vec<(String, Result<ManifestRecord>)> = with_jobs(jobs, || {
        manifest
            .records()
            .par_iter()
            .enumerate()
            .map(|(index, record)| {
                let result = load_sample(manifest, record).and_then(|sample| {
                    let mut rng = sample_rng(seed, index as u64);
                    let (image, mask) = augmenter.apply(&sample.image, &sample.mask, &mut rng)?;
                    save_sample(
                        &LabeledSample {
                            id: sample.id,
                            image,
                            mask,
                            bbox: None,
                        },
                        out_dir,
                    )
                });
                (record.id.clone(), result)
            })
            .collect()
    });
    let mut outcome = AugmentOutcome::default();
    for (id, result) in results {
        match result {
            Ok(record) => outcome.records.push(record),
            Err(e) => {
                log::warn!("stage=augment id={id} event=fail error={e}");
                outcome.failures.push((id, e));
            }
        }
    }
    DatasetManifest::new(out_dir, outcome.records.clone())?.save(&out_dir.join("manifest.jsonl"))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::compute_bounding_box;

    fn striped() -> (ImageBuffer, SalienceMask) {
        let mut image = ImageBuffer::new(10, 8, 3).unwrap();
        let mut mask = SalienceMask::new(10, 8).unwrap();
        for y in 0..8u32 {
            for x in 0..10u32 {
                image.set(x, y, 0, (x * 25) as u8);
                image.set(x, y, 1, (y * 30) as u8);
            }
        }
        for y in 3..8u32 {
            for x in 2..6u32 {
                mask.set(x, y, 255);
            }
        }
        (image, mask)
    }

    #[test]
    fn hflip_is_an_involution_that_mirrors_columns() {
        let (image, mask) = striped();
        let (flipped, flipped_mask) = hflip(&image, &mask).unwrap();
        assert_eq!(flipped.get(9, 0, 0), image.get(0, 0, 0));
        assert_eq!(flipped.get(0, 5, 0), image.get(9, 5, 0));
        let (back, back_mask) = hflip(&flipped, &flipped_mask).unwrap();
        assert_eq!(back, image);
        assert_eq!(back_mask, mask);
    }

    #[test]
    fn hflip_maps_box_corners_across_the_axis() {
        let mut mask = SalienceMask::new(10, 9).unwrap();
        for y in 3..=7u32 {
            for x in 2..=5u32 {
                mask.set(x, y, 255);
            }
        }
        let image = ImageBuffer::new(10, 9, 3).unwrap();
        let (_, flipped) = hflip(&image, &mask).unwrap();
        let bbox = compute_bounding_box(&flipped).unwrap();
        assert_eq!((bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max), (4, 3, 7, 7));
    }

    #[test]
    fn gridmask_fraction_tracks_the_keep_ratio() {
        let mut image = ImageBuffer::new(64, 64, 3).unwrap();
        for y in 0..64u32 {
            for x in 0..64u32 {
                for c in 0..3u8 {
                    image.set(x, y, c, 255);
                }
            }
        }
        let params = GridMaskParams {
            period: 32,
            keep_ratio: 0.6,
            offsets: (0, 0),
            probability: 1.0,
        };
        let mut rng = sample_rng(0, 0);
        let erased = gridmask(&image, &params, &mut rng).unwrap();
        let zeroed = (0..64u32)
            .flat_map(|y| (0..64u32).map(move |x| (x, y)))
            .filter(|&(x, y)| erased.get(x, y, 0) == 0)
            .count() as f64;
        let fraction = zeroed / (64.0 * 64.0);
        assert!(
            (fraction - 0.16).abs() <= 0.02,
            "erased fraction {fraction}"
        );
        // Side 13 at period 32 puts exactly 26 erased columns and rows in
        // a 64-wide frame.
        assert_eq!(zeroed as u64, 26 * 26);
    }

    #[test]
    fn keep_ratio_near_one_erases_single_pixels() {
        let mut image = ImageBuffer::new(64, 64, 1).unwrap();
        for y in 0..64u32 {
            for x in 0..64u32 {
                image.set(x, y, 0, 255);
            }
        }
        let params = GridMaskParams {
            period: 32,
            keep_ratio: 0.99,
            offsets: (0, 0),
            probability: 1.0,
        };
        assert_eq!(params.square_side(), 1);
        let mut rng = sample_rng(0, 0);
        let erased = gridmask(&image, &params, &mut rng).unwrap();
        let zeroed = (0..64u32)
            .flat_map(|y| (0..64u32).map(move |x| (x, y)))
            .filter(|&(x, y)| erased.get(x, y, 0) == 0)
            .count() as f64;
        assert!((zeroed / 4096.0 - 1.0 / 1024.0).abs() < 1e-9);
    }

    #[test]
    fn offset_squares_cross_the_origin_edge() {
        let mut image = ImageBuffer::new(40, 40, 1).unwrap();
        for y in 0..40u32 {
            for x in 0..40u32 {
                image.set(x, y, 0, 255);
            }
        }
        // Offset 30 with side 13 puts a square over [30, 43), whose tail
        // wraps from the previous tile across the top-left corner.
        let params = GridMaskParams {
            period: 32,
            keep_ratio: 0.6,
            offsets: (30, 30),
            probability: 1.0,
        };
        let mut rng = sample_rng(0, 0);
        let erased = gridmask(&image, &params, &mut rng).unwrap();
        // Previous tile square starts at 30 - 32 = -2, so (0, 0) is erased.
        assert_eq!(erased.get(0, 0, 0), 0);
        assert_eq!(erased.get(30, 30, 0), 0);
        assert_eq!(erased.get(20, 20, 0), 255);
    }

    #[test]
    fn zero_probability_is_identity() {
        let (image, _) = striped();
        let params = GridMaskParams {
            period: 8,
            keep_ratio: 0.5,
            offsets: (0, 0),
            probability: 0.0,
        };
        let mut rng = sample_rng(4, 4);
        assert_eq!(gridmask(&image, &params, &mut rng).unwrap(), image);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let (image, _) = striped();
        let mut rng = sample_rng(0, 0);
        let bad_period = GridMaskParams {
            period: 1,
            keep_ratio: 0.5,
            offsets: (0, 0),
            probability: 1.0,
        };
        assert!(matches!(
            gridmask(&image, &bad_period, &mut rng),
            Err(Error::GridPeriodTooSmall { period: 1 })
        ));
        let bad_ratio = GridMaskParams {
            period: 8,
            keep_ratio: 1.0,
            offsets: (0, 0),
            probability: 1.0,
        };
        assert!(matches!(
            gridmask(&image, &bad_ratio, &mut rng),
            Err(Error::KeepRatioOutOfRange { .. })
        ));
        let bad_probability = GridMaskParams {
            period: 8,
            keep_ratio: 0.5,
            offsets: (0, 0),
            probability: 1.5,
        };
        assert!(matches!(
            gridmask(&image, &bad_probability, &mut rng),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn registry_knows_both_augmenters() {
        let options = AugmenterOptions::default();
        for &name in augmenter_names() {
            let augmenter = create_augmenter(name, &options).unwrap();
            assert_eq!(augmenter.name(), name);
        }
        assert!(matches!(
            create_augmenter("cutout", &options),
            Err(Error::UnknownStrategy { .. })
        ));
    }

    #[test]
    fn augmenters_are_deterministic_per_stream() {
        let (image, mask) = striped();
        let options = AugmenterOptions {
            gridmask_period: (4, 12),
            ..AugmenterOptions::default()
        };
        for &name in augmenter_names() {
            let augmenter = create_augmenter(name, &options).unwrap();
            let mut a = sample_rng(9, 1);
            let mut b = sample_rng(9, 1);
            let out_a = augmenter.apply(&image, &mask, &mut a).unwrap();
            let out_b = augmenter.apply(&image, &mask, &mut b).unwrap();
            assert_eq!(out_a, out_b, "{name} must be stream-deterministic");
        }
    }

    #[test]
    fn hflip_augmenter_flips_about_half_the_streams() {
        let (image, mask) = striped();
        let augmenter = HorizontalFlip { probability: 0.5 };
        let mut flips = 0;
        for stream in 0..200u64 {
            let mut rng = sample_rng(21, stream);
            let (out, _) = augmenter.apply(&image, &mask, &mut rng).unwrap();
            if out != image {
                flips += 1;
            }
        }
        assert!((60..=140).contains(&flips), "{flips} flips out of 200");
    }
}
