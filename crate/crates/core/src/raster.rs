//! Pixel containers: interleaved 8-bit images, salience masks, and the tight
//! bounding boxes cut from them.

use crate::error::{Error, Result};

/// Row-major, channel-interleaved 8-bit image. One channel for grayscale
/// data, three for RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl ImageBuffer {
    /// Creates a zero-filled image.
    pub fn new(width: u32, height: u32, channels: u8) -> Result<Self> {
        Self::from_raw(
            width,
            height,
            channels,
            vec![0; width as usize * height as usize * channels as usize],
        )
    }

    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * channels as usize;
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) || data.len() != expected
        {
            return Err(Error::InvalidImageShape {
                width,
                height,
                channels,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn index(&self, x: u32, y: u32, channel: u8) -> usize {
        debug_assert!(x < self.width && y < self.height && channel < self.channels);
        (y as usize * self.width as usize + x as usize) * self.channels as usize + channel as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, channel: u8) -> u8 {
        self.data[self.index(x, y, channel)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, channel: u8, value: u8) {
        let i = self.index(x, y, channel);
        self.data[i] = value;
    }

    /// Copies out the `w` x `h` region whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<ImageBuffer> {
        if x.checked_add(w).is_none_or(|r| r > self.width)
            || y.checked_add(h).is_none_or(|b| b > self.height)
        {
            return Err(Error::PatchTooLarge {
                patch_w: w,
                patch_h: h,
                image_w: self.width,
                image_h: self.height,
            });
        }
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(w as usize * h as usize * c);
        for row in y..y + h {
            let start = (row as usize * self.width as usize + x as usize) * c;
            data.extend_from_slice(&self.data[start..start + w as usize * c]);
        }
        ImageBuffer::from_raw(w, h, self.channels, data)
    }
}

/// Single-channel 8-bit salience data with the same dimensions as its paired
/// image. Ground-truth masks are binary (values 0 or 255); predicted maps may
/// use the full range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SalienceMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl SalienceMask {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        Self::from_raw(width, height, vec![0; width as usize * height as usize])
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize {
            return Err(Error::InvalidImageShape {
                width,
                height,
                channels: 1,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0).count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0 || v == 255)
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<SalienceMask> {
        if x.checked_add(w).is_none_or(|r| r > self.width)
            || y.checked_add(h).is_none_or(|b| b > self.height)
        {
            return Err(Error::PatchTooLarge {
                patch_w: w,
                patch_h: h,
                image_w: self.width,
                image_h: self.height,
            });
        }
        let mut data = Vec::with_capacity(w as usize * h as usize);
        for row in y..y + h {
            let start = row as usize * self.width as usize + x as usize;
            data.extend_from_slice(&self.data[start..start + w as usize]);
        }
        SalienceMask::from_raw(w, h, data)
    }
}

/// Inclusive pixel rectangle around the salient region.
///
/// The span accessors use the max-minus-min convention, so a single-pixel box
/// has zero width, zero height, and zero area. The size formulas downstream
/// are defined in terms of these spans, not of pixel counts; use
/// [`BoundingBox::pixel_width`] when allocating rasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    /// Horizontal span, `x_max - x_min`.
    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    /// Vertical span, `y_max - y_min`.
    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    /// Span-based area, `width() * height()`.
    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    /// Number of pixel columns covered, `width() + 1`.
    pub fn pixel_width(&self) -> u32 {
        self.width() + 1
    }

    /// Number of pixel rows covered, `height() + 1`.
    pub fn pixel_height(&self) -> u32 {
        self.height() + 1
    }
}

/// Tightest box containing every nonzero mask pixel.
pub fn compute_bounding_box(mask: &SalienceMask) -> Result<BoundingBox> {
    let mut found = false;
    let (mut x_min, mut y_min, mut x_max, mut y_max) = (u32::MAX, u32::MAX, 0, 0);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) > 0 {
                found = true;
                x_min = x_min.min(x);
                y_min = y_min.min(y);
                x_max = x_max.max(x);
                y_max = y_max.max(y);
            }
        }
    }
    if !found {
        return Err(Error::NonSalientMask);
    }
    Ok(BoundingBox {
        x_min,
        y_min,
        x_max,
        y_max,
    })
}
