//! Hexcone HSV conversion and per-channel 64-bin histograms.

use crate::error::{Error, Result};
use crate::raster::{ImageBuffer, SalienceMask};

use super::{HistogramBlock, BLOCK_BINS};

/// Converts one RGB pixel to (hue, saturation, value) with hue in [0, 360)
/// and the other two in [0, 1]. Hue is 0 for achromatic pixels.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let rf = r as f64 / 255.0;
    let gf = g as f64 / 255.0;
    let bf = b as f64 / 255.0;
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;

    let v = max;
    let s = if max == 0.0 { 0.0 } else { delta / max };
    let h = if delta == 0.0 {
        0.0
    } else if max == rf {
        // rem_euclid keeps hue in [0, 360) when green dips below blue.
        60.0 * ((gf - bf) / delta).rem_euclid(6.0)
    } else if max == gf {
        60.0 * ((bf - rf) / delta + 2.0)
    } else {
        60.0 * ((rf - gf) / delta + 4.0)
    };
    (h, s, v)
}

#[inline]
pub(super) fn hue_bin(h: f64) -> usize {
    ((h / 360.0 * BLOCK_BINS as f64) as usize).min(BLOCK_BINS - 1)
}

#[inline]
pub(super) fn unit_bin(x: f64) -> usize {
    ((x * BLOCK_BINS as f64) as usize).min(BLOCK_BINS - 1)
}

/// Histograms hue, saturation, and value over the selected pixels (all
/// pixels when `mask` is `None`, nonzero-mask pixels otherwise). Each block
/// is independently normalized to unit sum; with no selected pixels the
/// blocks come back zeroed and flagged empty.
pub fn hsv_histograms(
    image: &ImageBuffer,
    mask: Option<&SalienceMask>,
) -> Result<[HistogramBlock; 3]> {
    if image.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            got: image.channels(),
        });
    }
    if let Some(m) = mask {
        if m.width() != image.width() || m.height() != image.height() {
            return Err(Error::MaskImageMismatch {
                image_w: image.width(),
                image_h: image.height(),
                mask_w: m.width(),
                mask_h: m.height(),
            });
        }
    }
    let mut counts = [[0u64; BLOCK_BINS]; 3];
    for y in 0..image.height() {
        for x in 0..image.width() {
            if let Some(m) = mask {
                if m.get(x, y) == 0 {
                    continue;
                }
            }
            let (h, s, v) = rgb_to_hsv(image.get(x, y, 0), image.get(x, y, 1), image.get(x, y, 2));
            counts[0][hue_bin(h)] += 1;
            counts[1][unit_bin(s)] += 1;
            counts[2][unit_bin(v)] += 1;
        }
    }
    Ok(counts.map(HistogramBlock::from_counts))
}
