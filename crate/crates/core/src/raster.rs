//! Raster primitives: 8-bit grayscale images, binary masks and the
//! pixel-set algebra (area, intersection, crop) the pipeline stages build
//! on.
//!
//! Every type here is an immutable value after construction and every
//! operation is pure, so they are safe to share across worker threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("image dimensions must be nonzero, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("buffer holds {got} values, expected {expected} for {width}x{height}")]
    BufferLength {
        width: u32,
        height: u32,
        expected: usize,
        got: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}; channels and masks must be aligned")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("bounding box ({x},{y}) {w}x{h} lies entirely outside a {width}x{height} image")]
    BoxOutsideImage {
        x: i64,
        y: i64,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },
    #[error("image is not binarized: pixel {index} has value {value}, expected 0 or 255")]
    NotBinarized { index: usize, value: u8 },
}

/// A single-channel 8-bit raster, stored row-major.
///
/// One microscopy layer (CK, DAPI or CD45) is one `GrayImage`. 16-bit
/// sources are reduced to 8 bits on ingestion by keeping the high byte
/// (see [`crate::dataset`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage { width, height });
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(RasterError::BufferLength {
                width,
                height,
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    /// Build from a per-pixel function, mostly useful in tests and fixtures.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels).expect("from_fn dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Sub-image of `bbox` expanded by `padding` on all sides and clamped
    /// to the image bounds. Output dimensions equal the clamped rectangle.
    ///
    /// Errors if the padded box misses the image entirely (an invalid
    /// detection); boxes that merely stick out past an edge are clamped,
    /// which is the normal case for detector output near borders.
    pub fn crop(&self, bbox: &BoundingBox, padding: u32) -> Result<GrayImage, RasterError> {
        let rect = bbox.resolve(padding, self.width, self.height).ok_or(
            RasterError::BoxOutsideImage {
                x: bbox.x as i64 - padding as i64,
                y: bbox.y as i64 - padding as i64,
                w: bbox.w.saturating_add(2 * padding),
                h: bbox.h.saturating_add(2 * padding),
                width: self.width,
                height: self.height,
            },
        )?;
        let mut pixels = Vec::with_capacity(rect.w as usize * rect.h as usize);
        for y in rect.y..rect.y + rect.h {
            let row = y as usize * self.width as usize;
            pixels.extend_from_slice(&self.pixels[row + rect.x as usize..row + (rect.x + rect.w) as usize]);
        }
        GrayImage::new(rect.w, rect.h, pixels)
    }

    /// Lift a 0/255 image into mask algebra: bit set iff the pixel is 255.
    ///
    /// Any other intensity means the image was never binarized, which is a
    /// caller bug, so it is an error instead of an implicit threshold.
    pub fn to_mask(&self) -> Result<BinaryMask, RasterError> {
        let mut bits = Vec::with_capacity(self.pixels.len());
        for (index, &value) in self.pixels.iter().enumerate() {
            match value {
                0 => bits.push(false),
                255 => bits.push(true),
                _ => return Err(RasterError::NotBinarized { index, value }),
            }
        }
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }
}

/// Pixel membership set over a raster grid, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage { width, height });
        }
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(RasterError::BufferLength {
                width,
                height,
                expected,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self, RasterError> {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits).expect("from_fn dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    /// Number of member pixels. The `A(x)` of the overlap formulas.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Number of pixels in both masks. Commutative; errors when the two
    /// masks come from misaligned grids.
    pub fn intersection_area(&self, other: &BinaryMask) -> Result<usize, RasterError> {
        if self.dims() != other.dims() {
            return Err(RasterError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|&(&a, &b)| a && b)
            .count())
    }

    /// Set union in place; panics on dimension mismatch (internal use).
    pub(crate) fn union_with(&mut self, other: &BinaryMask) {
        assert_eq!(self.dims(), other.dims(), "union of misaligned masks");
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a = *a || b;
        }
    }

    /// Sub-mask of the same rectangle a [`GrayImage::crop`] call with the
    /// same box, padding and parent dimensions would select.
    pub fn crop(&self, bbox: &BoundingBox, padding: u32) -> Result<BinaryMask, RasterError> {
        let rect = bbox.resolve(padding, self.width, self.height).ok_or(
            RasterError::BoxOutsideImage {
                x: bbox.x as i64 - padding as i64,
                y: bbox.y as i64 - padding as i64,
                w: bbox.w.saturating_add(2 * padding),
                h: bbox.h.saturating_add(2 * padding),
                width: self.width,
                height: self.height,
            },
        )?;
        let mut bits = Vec::with_capacity(rect.w as usize * rect.h as usize);
        for y in rect.y..rect.y + rect.h {
            let row = y as usize * self.width as usize;
            bits.extend_from_slice(&self.bits[row + rect.x as usize..row + (rect.x + rect.w) as usize]);
        }
        BinaryMask::new(rect.w, rect.h, bits)
    }

    /// Tight bounding box of the member pixels, or `None` for an empty mask.
    pub fn tight_bbox(&self) -> Option<BoundingBox> {
        let (mut min_x, mut min_y) = (u32::MAX, u32::MAX);
        let (mut max_x, mut max_y) = (0u32, 0u32);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    min_x = min_x.min(x);
                    min_y = min_y.min(y);
                    max_x = max_x.max(x);
                    max_y = max_y.max(y);
                }
            }
        }
        any.then(|| BoundingBox {
            x: min_x as i32,
            y: min_y as i32,
            w: max_x - min_x + 1,
            h: max_y - min_y + 1,
        })
    }
}

/// Axis-aligned pixel rectangle; `x`/`y` are the left/top inclusive corner.
///
/// Coordinates are signed because detector backends may report boxes that
/// start past the left or top edge; clamping happens at crop time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i32,
    pub y: i32,
    pub w: u32,
    pub h: u32,
}

/// A crop rectangle fully inside an image, produced by [`BoundingBox::resolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: i32, y: i32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Expand by `padding` on all sides, then clamp to a `width`x`height`
    /// grid. `None` when the padded box misses the grid entirely.
    pub(crate) fn resolve(&self, padding: u32, width: u32, height: u32) -> Option<Rect> {
        let x0 = (self.x as i64 - padding as i64).max(0);
        let y0 = (self.y as i64 - padding as i64).max(0);
        let x1 = (self.x as i64 + self.w as i64 + padding as i64).min(width as i64);
        let y1 = (self.y as i64 + self.h as i64 + padding as i64).min(height as i64);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        Some(Rect {
            x: x0 as u32,
            y: y0 as u32,
            w: (x1 - x0) as u32,
            h: (y1 - y0) as u32,
        })
    }
}

/// One sample's aligned CK / DAPI / CD45 layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub sample_id: String,
    pub ck: GrayImage,
    pub dapi: GrayImage,
    pub cd45: GrayImage,
}

impl ChannelSet {
    pub fn new(
        sample_id: impl Into<String>,
        ck: GrayImage,
        dapi: GrayImage,
        cd45: GrayImage,
    ) -> Result<Self, RasterError> {
        if ck.dims() != dapi.dims() {
            return Err(RasterError::DimensionMismatch(
                ck.width, ck.height, dapi.width, dapi.height,
            ));
        }
        if ck.dims() != cd45.dims() {
            return Err(RasterError::DimensionMismatch(
                ck.width, ck.height, cd45.width, cd45.height,
            ));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            ck,
            dapi,
            cd45,
        })
    }

    pub fn dims(&self) -> (u32, u32) {
        self.ck.dims()
    }
}
