//! Harmonic hole filling. Hole pixels are relaxed toward the average of
//! their neighbors until the update stabilizes, which diffuses the colors
//! surrounding the hole smoothly across it. Self-contained and fully
//! deterministic, so it is the default backend.

use super::{effective_hole, InpaintBackend, InpaintRequest};
use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

#[derive(Debug, Clone)]
pub struct DiffusionInpainter {
    /// Stop once no pixel moved by at least this many gray levels in one
    /// sweep.
    pub tolerance: f64,
    /// Hard cap on sweeps for slowly converging (large) holes.
    pub max_iterations: u32,
}

impl Default for DiffusionInpainter {
    fn default() -> Self {
        Self {
            tolerance: 0.5,
            max_iterations: 2000,
        }
    }
}

impl InpaintBackend for DiffusionInpainter {
    fn name(&self) -> &'static str {
        "diffusion"
    }

    fn inpaint(&self, request: &InpaintRequest) -> Result<ImageBuffer> {
        let image = &request.image;
        let hole = effective_hole(request);
        if hole.width() != image.width() || hole.height() != image.height() {
            return Err(Error::MaskImageMismatch {
                image_w: image.width(),
                image_h: image.height(),
                mask_w: hole.width(),
                mask_h: hole.height(),
            });
        }

        let (w, h) = (image.width() as usize, image.height() as usize);
        let hole_px: Vec<(usize, usize)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| hole.get(x as u32, y as u32) != 0)
            .collect();
        if hole_px.is_empty() {
            return Ok(image.clone());
        }
        if hole_px.len() == w * h {
            return Err(Error::HoleCoversImage);
        }

        let mut out = image.clone();
        for channel in 0..image.channels() {
            self.fill_channel(image, &hole, &hole_px, channel, &mut out);
        }
        Ok(out)
    }
}

impl DiffusionInpainter {
    fn fill_channel(
        &self,
        image: &ImageBuffer,
        hole: &crate::raster::SalienceMask,
        hole_px: &[(usize, usize)],
        channel: u8,
        out: &mut ImageBuffer,
    ) {
        let (w, h) = (image.width() as usize, image.height() as usize);

        // Seed the hole with the mean of the pixels ringing it so the very
        // first sweep already starts near the answer.
        let mut boundary_sum = 0.0;
        let mut boundary_count = 0u64;
        for y in 0..h {
            for x in 0..w {
                if hole.get(x as u32, y as u32) != 0 {
                    continue;
                }
                let rings_hole = neighbors(x, y, w, h)
                    .any(|(nx, ny)| hole.get(nx as u32, ny as u32) != 0);
                if rings_hole {
                    boundary_sum += image.get(x as u32, y as u32, channel) as f64;
                    boundary_count += 1;
                }
            }
        }
        let seed = boundary_sum / boundary_count as f64;

        let mut prev: Vec<f64> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                if hole.get(x as u32, y as u32) != 0 {
                    seed
                } else {
                    image.get(x as u32, y as u32, channel) as f64
                }
            })
            .collect();
        let mut next = prev.clone();

        for _ in 0..self.max_iterations {
            let mut max_delta = 0.0f64;
            for &(x, y) in hole_px {
                let mut sum = 0.0;
                let mut count = 0u32;
                for (nx, ny) in neighbors(x, y, w, h) {
                    sum += prev[ny * w + nx];
                    count += 1;
                }
                let value = sum / count as f64;
                max_delta = max_delta.max((value - prev[y * w + x]).abs());
                next[y * w + x] = value;
            }
            std::mem::swap(&mut prev, &mut next);
            if max_delta < self.tolerance {
                break;
            }
        }

        // Only hole pixels are written back; everything else keeps its
        // original bytes.
        for &(x, y) in hole_px {
            let value = prev[y * w + x].round().clamp(0.0, 255.0) as u8;
            out.set(x as u32, y as u32, channel, value);
        }
    }
}

fn neighbors(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let (xi, yi) = (x as i64, y as i64);
    [(xi - 1, yi), (xi + 1, yi), (xi, yi - 1), (xi, yi + 1)]
        .into_iter()
        .filter(move |&(nx, ny)| nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
        .map(|(nx, ny)| (nx as usize, ny as usize))
}
