//! Uniform local binary patterns on a circle of interpolated samples.
//!
//! Each pixel far enough from the border is compared against `points`
//! locations sampled bilinearly on a circle of the given radius. A sample at
//! least as bright as the center contributes a 1 bit. Patterns with at most
//! two 0/1 transitions around the circle are "uniform" and coded by their
//! popcount (0..=points); every other pattern shares the single non-uniform
//! code `points + 1`. Codes are then histogrammed into 64 equal-width bins
//! spanning `[0, points + 2)`.
//!
//! Pixels whose circle would leave the image are skipped entirely rather
//! than padded, so a map carries an explicit validity margin.

use crate::error::{Error, Result};
use crate::raster::{ImageBuffer, SalienceMask};

use super::{HistogramBlock, BLOCK_BINS};

/// Sampling geometry. The histogram layout depends on `points`, so these are
/// fixed project-wide at their defaults; the struct exists to keep the
/// geometry explicit and testable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbpParams {
    pub points: u32,
    pub radius: f64,
}

impl Default for LbpParams {
    fn default() -> Self {
        Self {
            points: 24,
            radius: 3.0,
        }
    }
}

impl LbpParams {
    /// Number of distinct codes: popcounts 0..=points plus the shared
    /// non-uniform code.
    pub fn code_count(&self) -> u32 {
        self.points + 2
    }

    /// Border width inside which the sampling circle would leave the image.
    pub fn margin(&self) -> u32 {
        self.radius.ceil() as u32
    }

    /// Smallest image side that leaves at least one interior pixel.
    pub fn min_side(&self) -> u32 {
        2 * self.margin() + 1
    }
}

pub const INVALID_CODE: u8 = u8::MAX;

/// Per-pixel codes; border pixels hold no code.
#[derive(Debug, Clone)]
pub struct LbpCodeMap {
    width: u32,
    height: u32,
    codes: Vec<u8>,
}

impl LbpCodeMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// The code at (x, y), or `None` for skipped border pixels.
    pub fn code(&self, x: u32, y: u32) -> Option<u8> {
        let c = self.codes[y as usize * self.width as usize + x as usize];
        (c != INVALID_CODE).then_some(c)
    }
}

/// Collapses an RGB image to one luma channel (0.299 R + 0.587 G + 0.114 B,
/// rounded). Single-channel images pass through unchanged.
pub fn luma(image: &ImageBuffer) -> Result<ImageBuffer> {
    match image.channels() {
        1 => Ok(image.clone()),
        3 => {
            let mut data = Vec::with_capacity(image.width() as usize * image.height() as usize);
            for px in image.data().chunks_exact(3) {
                let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
                data.push(y.round() as u8);
            }
            ImageBuffer::from_raw(image.width(), image.height(), 1, data)
        }
        got => Err(Error::ChannelMismatch { expected: 3, got }),
    }
}

// Nested lerps rather than the four-weight sum: on a flat patch the
// differences vanish exactly, so the sample equals the center and the
// ties-count-as-one rule can actually fire there.
#[inline]
fn bilinear(gray: &ImageBuffer, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let x0 = x0 as u32;
    let y0 = y0 as u32;
    let x1 = (x0 + 1).min(gray.width() - 1);
    let y1 = (y0 + 1).min(gray.height() - 1);
    let v00 = gray.get(x0, y0, 0) as f64;
    let v10 = gray.get(x1, y0, 0) as f64;
    let v01 = gray.get(x0, y1, 0) as f64;
    let v11 = gray.get(x1, y1, 0) as f64;
    let top = v00 + fx * (v10 - v00);
    let bottom = v01 + fx * (v11 - v01);
    top + fy * (bottom - top)
}

/// Computes the uniform-pattern code for every interior pixel of a grayscale
/// image. Errors if the image is smaller than the sampling circle in either
/// dimension.
pub fn lbp_code_map(gray: &ImageBuffer, params: &LbpParams) -> Result<LbpCodeMap> {
    if gray.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            got: gray.channels(),
        });
    }
    let (w, h) = (gray.width(), gray.height());
    let min = params.min_side();
    if w < min || h < min {
        return Err(Error::TooSmallForLbp {
            width: w,
            height: h,
            min,
        });
    }

    let offsets: Vec<(f64, f64)> = (0..params.points)
        .map(|p| {
            let theta = 2.0 * std::f64::consts::PI * p as f64 / params.points as f64;
            // Columns advance with cos, rows run downward so sin is negated.
            (params.radius * theta.cos(), -params.radius * theta.sin())
        })
        .collect();

    let margin = params.margin();
    let mut codes = vec![INVALID_CODE; w as usize * h as usize];
    let mut bits = vec![false; params.points as usize];
    for y in margin..h - margin {
        for x in margin..w - margin {
            let center = gray.get(x, y, 0) as f64;
            for (bit, &(dx, dy)) in bits.iter_mut().zip(&offsets) {
                *bit = bilinear(gray, x as f64 + dx, y as f64 + dy) >= center;
            }
            let transitions = (0..bits.len())
                .filter(|&p| bits[p] != bits[(p + 1) % bits.len()])
                .count();
            let code = if transitions <= 2 {
                bits.iter().filter(|&&b| b).count() as u8
            } else {
                (params.points + 1) as u8
            };
            codes[y as usize * w as usize + x as usize] = code;
        }
    }
    Ok(LbpCodeMap {
        width: w,
        height: h,
        codes,
    })
}

/// Bin index for a code. The 64 bins split `[0, code_count)` evenly; the bin
/// width is under 1, so distinct codes never share a bin.
#[inline]
pub fn code_bin(code: u8, params: &LbpParams) -> usize {
    code as usize * BLOCK_BINS / params.code_count() as usize
}

/// Histograms the valid codes (optionally restricted to nonzero mask
/// pixels), normalized to unit sum; zeroed and flagged when no pixel
/// qualifies.
pub fn lbp_histogram(
    map: &LbpCodeMap,
    mask: Option<&SalienceMask>,
    params: &LbpParams,
) -> Result<HistogramBlock> {
    if let Some(m) = mask {
        if m.width() != map.width() || m.height() != map.height() {
            return Err(Error::MaskImageMismatch {
                image_w: map.width(),
                image_h: map.height(),
                mask_w: m.width(),
                mask_h: m.height(),
            });
        }
    }
    let mut counts = [0u64; BLOCK_BINS];
    for y in 0..map.height() {
        for x in 0..map.width() {
            let Some(code) = map.code(x, y) else {
                continue;
            };
            if let Some(m) = mask {
                if m.get(x, y) == 0 {
                    continue;
                }
            }
            counts[code_bin(code, params)] += 1;
        }
    }
    Ok(HistogramBlock::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> ImageBuffer {
        let mut img = ImageBuffer::new(w, h, 1).unwrap();
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, 0, f(x, y));
            }
        }
        img
    }

    #[test]
    fn constant_image_codes_are_all_pattern_length() {
        let img = gray(10, 9, |_, _| 77);
        let params = LbpParams::default();
        let map = lbp_code_map(&img, &params).unwrap();
        for y in 0..9 {
            for x in 0..10 {
                let interior = (3..=6).contains(&x) && (3..=5).contains(&y);
                match map.code(x, y) {
                    Some(code) => {
                        assert!(interior);
                        assert_eq!(code, 24);
                    }
                    None => assert!(!interior),
                }
            }
        }
        // Code 24 lands in bin floor(24 * 64 / 26) = 59.
        let hist = lbp_histogram(&map, None, &params).unwrap();
        assert_eq!(hist.bins[59], 1.0);
    }

    #[test]
    fn bright_center_over_dark_surround_codes_zero() {
        let img = gray(7, 7, |x, y| if (x, y) == (3, 3) { 200 } else { 10 });
        let map = lbp_code_map(&img, &LbpParams::default()).unwrap();
        assert_eq!(map.code(3, 3), Some(0));
    }

    #[test]
    fn images_below_the_circle_diameter_are_rejected() {
        let params = LbpParams::default();
        assert!(matches!(
            lbp_code_map(&gray(6, 20, |_, _| 0), &params),
            Err(Error::TooSmallForLbp { min: 7, .. })
        ));
        assert!(lbp_code_map(&gray(7, 7, |_, _| 0), &params).is_ok());
    }

    #[test]
    fn valid_region_excludes_the_margin() {
        let img = gray(64, 64, |x, y| (x * 3 + y * 5) as u8);
        let map = lbp_code_map(&img, &LbpParams::default()).unwrap();
        let valid = (0..64u32)
            .flat_map(|y| (0..64u32).map(move |x| (x, y)))
            .filter(|&(x, y)| map.code(x, y).is_some())
            .count();
        assert_eq!(valid, 58 * 58);
    }

    #[test]
    fn codes_stay_within_the_uniform_range() {
        let img = gray(32, 32, |x, y| ((x * 31 + y * 17) % 251) as u8);
        let params = LbpParams::default();
        let map = lbp_code_map(&img, &params).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                if let Some(code) = map.code(x, y) {
                    assert!(code as u32 <= params.points + 1);
                }
            }
        }
    }

    #[test]
    fn code_bins_are_distinct() {
        let params = LbpParams::default();
        let bins: Vec<usize> = (0..params.code_count() as u8)
            .map(|c| code_bin(c, &params))
            .collect();
        let mut unique = bins.clone();
        unique.dedup();
        assert_eq!(unique.len(), bins.len());
        assert!(bins.iter().all(|&b| b < BLOCK_BINS));
    }

    #[test]
    fn masked_histogram_ignores_border_and_unmasked_pixels() {
        let img = gray(9, 9, |_, _| 50);
        let params = LbpParams::default();
        let map = lbp_code_map(&img, &params).unwrap();
        // Mask only one interior and one border pixel; only the interior one
        // can contribute.
        let mut mask = SalienceMask::new(9, 9).unwrap();
        mask.set(4, 4, 255);
        mask.set(0, 0, 255);
        let hist = lbp_histogram(&map, Some(&mask), &params).unwrap();
        assert!(!hist.empty);
        assert_eq!(hist.bins[code_bin(24, &params)], 1.0);

        // A mask covering only the border selects nothing.
        let mut border_only = SalienceMask::new(9, 9).unwrap();
        border_only.set(0, 4, 255);
        let hist = lbp_histogram(&map, Some(&border_only), &params).unwrap();
        assert!(hist.empty);
    }
}
