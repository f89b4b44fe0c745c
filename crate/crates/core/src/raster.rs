//! In-memory RGB images and 8-bit label maps, with PNG I/O.

use crate::error::{Error, Result};
use std::path::Path;

/// 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Argument(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self::new(width, height, vec![rgb; width * height]).expect("positive dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    /// Copies the `w×h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> ImageRgb {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + w]);
        }
        ImageRgb {
            width: w,
            height: h,
            pixels,
        }
    }

    /// Rotates by 90 degrees clockwise.
    pub fn rotate90(&self) -> ImageRgb {
        let (w, h) = (self.width, self.height);
        let mut pixels = vec![[0u8; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                // (x, y) -> (h - 1 - y, x) in a h-wide image
                pixels[x * h + (h - 1 - y)] = self.get(x, y);
            }
        }
        ImageRgb {
            width: h,
            height: w,
            pixels,
        }
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Pixel label for background that carries no class.
pub const UNLABELLED: u8 = 255;

/// Per-pixel class indices (one byte each), row-major.
/// [`UNLABELLED`] marks background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Argument(format!(
                "{width}x{height} label map with {} entries",
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        let gray = match img {
            image::DynamicImage::ImageLuma8(g) => g,
            _ => return Err(Error::format(path, "label map must be an 8-bit grayscale PNG")),
        };
        let (w, h) = gray.dimensions();
        Self::new(w as usize, h as usize, gray.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.labels.clone())
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}
