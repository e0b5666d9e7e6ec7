use serde::{Deserialize, Serialize};

use super::RasterError;

/// 8-bit RGB triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const BLACK: Rgb = Rgb(0, 0, 0);
    pub const WHITE: Rgb = Rgb(255, 255, 255);

    pub fn channels(self) -> [u8; 3] {
        [self.0, self.1, self.2]
    }
}

/// Row-major RGB raster. `pixels.len() == width * height` always holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl PixelImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage { width, height });
        }
        Ok(Self {
            width,
            height,
            pixels: vec![color; width * height],
        })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage { width, height });
        }
        if pixels.len() != width * height {
            return Err(RasterError::PixelCount {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from packed RGB bytes (3 per pixel, row-major).
    pub fn from_rgb_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self, RasterError> {
        if bytes.len() != width * height * 3 {
            return Err(RasterError::PixelCount {
                expected: width * height,
                actual: bytes.len() / 3,
            });
        }
        let pixels = bytes.chunks_exact(3).map(|c| Rgb(c[0], c[1], c[2])).collect();
        Self::from_pixels(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, color: Rgb) {
        self.pixels[y * self.width + x] = color;
    }

    /// Fills `[x, x+w) × [y, y+h)`, clipped to the image.
    pub fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, color: Rgb) {
        let x_end = (x + w).min(self.width);
        let y_end = (y + h).min(self.height);
        for row in y.min(self.height)..y_end {
            let base = row * self.width;
            self.pixels[base + x.min(x_end)..base + x_end].fill(color);
        }
    }

    pub fn to_rgb_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.channels()).collect()
    }

    /// Copies rows `[y0, y0+h)` into a new image.
    pub fn crop_rows(&self, y0: usize, h: usize) -> Result<Self, RasterError> {
        if y0 + h > self.height {
            return Err(RasterError::PixelCount {
                expected: (y0 + h) * self.width,
                actual: self.pixels.len(),
            });
        }
        let start = y0 * self.width;
        Self::from_pixels(self.width, h, self.pixels[start..start + h * self.width].to_vec())
    }
}
