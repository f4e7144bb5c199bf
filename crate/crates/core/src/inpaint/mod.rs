//! Background generation: erase the salient region of each sample and fill
//! the hole. Backends implement [`InpaintBackend`] and are selected by name,
//! so the built-in diffusion filler and external tools are interchangeable.

mod diffusion;
mod external;

pub use diffusion::DiffusionInpainter;
pub use external::ExternalInpainter;

use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{load_sample, save_sample, DatasetManifest, LabeledSample, ManifestRecord};
use crate::error::{Error, Result};
use crate::parallel::with_jobs;
use crate::raster::{ImageBuffer, SalienceMask};

/// An image plus the hole to fill. Nonzero hole pixels are replaced; the
/// rest must survive bit for bit (the external backend relaxes that but
/// keeps the dimension contract). The hole is widened by `dilation_radius`
/// before filling so halo pixels around the object are regenerated too.
#[derive(Debug, Clone)]
pub struct InpaintRequest {
    pub image: ImageBuffer,
    pub hole: SalienceMask,
    pub dilation_radius: u32,
}

/// A filled background, keyed by the sample it came from.
#[derive(Debug, Clone)]
pub struct BackgroundImage {
    pub id: String,
    pub image: ImageBuffer,
}

impl BackgroundImage {
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }
}

/// A hole-filling strategy.
pub trait InpaintBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn inpaint(&self, request: &InpaintRequest) -> Result<ImageBuffer>;
}

pub fn backend_names() -> &'static [&'static str] {
    &["diffusion", "external"]
}

/// Instantiates a backend by registry name. The external backend needs its
/// command template.
pub fn create_backend(
    name: &str,
    command_template: Option<&str>,
) -> Result<Box<dyn InpaintBackend>> {
    match name {
        "diffusion" => Ok(Box::new(DiffusionInpainter::default())),
        "external" => {
            let template = command_template.ok_or(Error::MissingCommandTemplate)?;
            Ok(Box::new(ExternalInpainter::new(template)?))
        }
        other => Err(Error::UnknownStrategy {
            kind: "inpaint backend",
            name: other.to_string(),
            known: "diffusion, external",
        }),
    }
}

/// Morphological dilation with a disc structuring element: every pixel
/// within Euclidean distance `radius` of a nonzero pixel becomes 255.
/// Radius 0 is the identity (modulo snapping values to {0, 255}).
pub fn dilate_mask(mask: &SalienceMask, radius: u32) -> SalienceMask {
    let mut out = SalienceMask::new(mask.width(), mask.height()).expect("mask dims");
    let r = radius as i64;
    let disc: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) == 0 {
                continue;
            }
            for &(dx, dy) in &disc {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx >= 0 && ny >= 0 && (nx as u32) < mask.width() && (ny as u32) < mask.height()
                {
                    out.set(nx as u32, ny as u32, 255);
                }
            }
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct InpaintOutcome {
    pub records: Vec<ManifestRecord>,
    pub failures: Vec<(String, Error)>,
}

/// Fills every sample of the manifest and writes the results under
/// `out_dir` (`images/` holds the backgrounds, `masks/` the erased holes,
/// `manifest.jsonl` the index). Per-sample failures are collected rather
/// than aborting the run; sample ids are preserved.
pub fn generate_backgrounds(
    manifest: &DatasetManifest,
    backend: &dyn InpaintBackend,
    dilation_radius: u32,
    jobs: usize,
    out_dir: &Path,
) -> Result<InpaintOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results: Vec<(String, Result<ManifestRecord>)> = with_jobs(jobs, || {
        manifest
            .records()
            .par_iter()
            .map(|record| {
                let outcome = fill_one(manifest, record, backend, dilation_radius, out_dir);
                (record.id.clone(), outcome)
            })
            .collect()
    });

    let mut outcome = InpaintOutcome::default();
    for (id, result) in results {
        match result {
            Ok(record) => outcome.records.push(record),
            Err(e) => {
                log::warn!("stage=inpaint id={id} event=fail error={e}");
                outcome.failures.push((id, e));
            }
        }
    }
    DatasetManifest::new(out_dir, outcome.records.clone())?.save(&out_dir.join("manifest.jsonl"))?;
    Ok(outcome)
}

fn fill_one(
    manifest: &DatasetManifest,
    record: &ManifestRecord,
    backend: &dyn InpaintBackend,
    dilation_radius: u32,
    out_dir: &Path,
) -> Result<ManifestRecord> {
    let sample = load_sample(manifest, record)?;
    // Dilate once here so the saved hole matches what the backend filled.
    let hole = dilate_mask(&sample.mask, dilation_radius);
    let request = InpaintRequest {
        image: sample.image,
        hole: hole.clone(),
        dilation_radius: 0,
    };
    let filled = backend.inpaint(&request)?;
    save_sample(
        &LabeledSample {
            id: sample.id,
            image: filled,
            mask: hole,
            bbox: None,
        },
        out_dir,
    )
}

/// The hole a request actually fills, dilation applied.
pub(crate) fn effective_hole(request: &InpaintRequest) -> SalienceMask {
    if request.dilation_radius == 0 {
        request.hole.clone()
    } else {
        dilate_mask(&request.hole, request.dilation_radius)
    }
}
