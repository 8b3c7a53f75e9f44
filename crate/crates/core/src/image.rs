//! Row-major 8-bit raster types.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("binary image pixels must be 0 or 255, found {0}")]
    NotBinary(u8),
    #[error("expected a {expected_w}x{expected_h} image, got {width}x{height}")]
    WrongDimensions {
        expected_w: usize,
        expected_h: usize,
        width: usize,
        height: usize,
    },
    #[error("region of interest has zero side length")]
    DegenerateRoi,
    #[error("{boxes} boxes but {labels} labels")]
    LengthMismatch { boxes: usize, labels: usize },
}

fn check_dims(width: usize, height: usize, channels: usize, len: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyImage { width, height });
    }
    let expected = width * height * channels;
    if len != expected {
        return Err(ImageError::BufferLength {
            expected,
            actual: len,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(width, height, 1, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with `value`. Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("non-empty dimensions")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels).expect("non-empty dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Pixel at column `x`, row `y`.
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn ensure_dims(&self, w: usize, h: usize) -> Result<(), ImageError> {
        if self.width != w || self.height != h {
            return Err(ImageError::WrongDimensions {
                expected_w: w,
                expected_h: h,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn mirrored_horizontally(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }

    /// Gray replicated into three channels.
    pub fn to_rgb(&self) -> RgbImage {
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        RgbImage::new(self.width, self.height, pixels).expect("same dimensions")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    /// `pixels` holds interleaved `r, g, b` bytes.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(width, height, 3, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = std::iter::repeat_n(rgb, width * height).flatten().collect();
        Self::new(width, height, pixels).expect("non-empty dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Sets the pixel if `(x, y)` lies inside the image; out-of-range writes are dropped.
    pub fn set_clipped(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.set(x as usize, y as usize, rgb);
        }
    }
}

/// Thresholded image whose pixels are exactly 0 (background) or 255 (foreground).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl BinaryImage {
    pub const FOREGROUND: u8 = 255;

    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(width, height, 1, pixels.len())?;
        if let Some(&bad) = pixels.iter().find(|&&p| p != 0 && p != 255) {
            return Err(ImageError::NotBinary(bad));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let gray = GrayImage::from_fn(width, height, |x, y| if f(x, y) { 255 } else { 0 });
        Self {
            width,
            height,
            pixels: gray.into_pixels(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] == Self::FOREGROUND
    }

    /// Foreground value at a possibly out-of-bounds coordinate; outside reads as 0.
    pub fn get_padded(&self, x: i64, y: i64) -> u8 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0
        } else {
            self.pixels[y as usize * self.width + x as usize]
        }
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels
            .iter()
            .filter(|&&p| p == Self::FOREGROUND)
            .count()
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.clone(),
        }
    }
}

/// Axis-aligned box: top-left `(x, y)` and extent `w × h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_checks() {
        assert_eq!(
            GrayImage::new(0, 3, vec![]),
            Err(ImageError::EmptyImage {
                width: 0,
                height: 3
            })
        );
        assert!(matches!(
            RgbImage::new(2, 2, vec![0; 11]),
            Err(ImageError::BufferLength {
                expected: 12,
                actual: 11
            })
        ));
        assert_eq!(
            BinaryImage::new(1, 1, vec![7]),
            Err(ImageError::NotBinary(7))
        );
    }

    #[test]
    fn padded_reads() {
        let b = BinaryImage::from_fn(2, 2, |x, y| x == 1 && y == 0);
        assert_eq!(b.get_padded(1, 0), 255);
        assert_eq!(b.get_padded(-1, 0), 0);
        assert_eq!(b.get_padded(2, 1), 0);
    }
}
