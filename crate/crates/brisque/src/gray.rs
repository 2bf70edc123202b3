//! Grayscale image plane and luma conversion.

use std::path::Path;

use crate::error::{BrisqueError, Result};

/// Minimum edge length accepted for analysis.
pub const MIN_DIMENSION: usize = 16;

/// A single-channel image stored row-major as `f64` luma values,
/// nominally on the `[0, 255]` scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    luma: Vec<f64>,
}

impl GrayImage {
    /// Wrap an existing luma plane. Dimensions must be at least
    /// [`MIN_DIMENSION`] on each side and `luma` must hold exactly
    /// `width * height` values.
    pub fn new(width: usize, height: usize, luma: Vec<f64>) -> Result<Self> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(BrisqueError::ImageTooSmall { width, height });
        }
        if luma.len() != width * height {
            return Err(BrisqueError::BufferSizeMismatch {
                got: luma.len(),
                expected: width * height,
            });
        }
        Ok(Self { width, height, luma })
    }

    /// Construct without the minimum-dimension check. Used for the metric's
    /// internal half-resolution scale, which may drop below 16 pixels.
    pub(crate) fn new_unchecked(width: usize, height: usize, luma: Vec<f64>) -> Self {
        debug_assert_eq!(luma.len(), width * height);
        Self { width, height, luma }
    }

    /// BT.601 luma conversion of an interleaved 8-bit RGB raster:
    /// `0.299 R + 0.587 G + 0.114 B` per pixel.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(BrisqueError::ImageTooSmall { width, height });
        }
        if rgb.len() != width * height * 3 {
            return Err(BrisqueError::BufferSizeMismatch {
                got: rgb.len(),
                expected: width * height * 3,
            });
        }
        let luma = rgb
            .chunks_exact(3)
            .map(|px| 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]))
            .collect();
        Ok(Self { width, height, luma })
    }

    /// Decode a PNG or JPEG file and convert it to luma.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| BrisqueError::Decode {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        Self::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn luma(&self) -> &[f64] {
        &self.luma
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.luma[y * self.width + x]
    }

    /// Halve the resolution by plain 2x2 block averaging. A trailing odd row
    /// or column is dropped.
    pub fn downsample_half(&self) -> GrayImage {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let sum = self.get(2 * x, 2 * y)
                    + self.get(2 * x + 1, 2 * y)
                    + self.get(2 * x, 2 * y + 1)
                    + self.get(2 * x + 1, 2 * y + 1);
                out.push(sum / 4.0);
            }
        }
        GrayImage::new_unchecked(w, h, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_raster_is_full_scale() {
        let rgb = vec![255u8; 16 * 16 * 3];
        let img = GrayImage::from_rgb8(16, 16, &rgb).unwrap();
        assert!(img.luma().iter().all(|&v| (v - 255.0).abs() < 1e-12));
    }

    #[test]
    fn pure_red_uses_bt601_weight() {
        let mut rgb = vec![0u8; 16 * 16 * 3];
        for px in rgb.chunks_exact_mut(3) {
            px[0] = 255;
        }
        let img = GrayImage::from_rgb8(16, 16, &rgb).unwrap();
        assert!(img.luma().iter().all(|&v| (v - 76.245).abs() < 1e-12));
    }

    #[test]
    fn undersized_raster_is_rejected() {
        let rgb = vec![0u8; 8 * 8 * 3];
        assert!(matches!(
            GrayImage::from_rgb8(8, 8, &rgb),
            Err(BrisqueError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn downsample_averages_blocks() {
        let mut luma = vec![0.0; 16 * 16];
        luma[0] = 4.0;
        luma[1] = 8.0;
        luma[16] = 12.0;
        luma[17] = 16.0;
        let img = GrayImage::new(16, 16, luma).unwrap();
        let half = img.downsample_half();
        assert_eq!(half.width(), 8);
        assert_eq!(half.height(), 8);
        assert!((half.get(0, 0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn downsample_drops_odd_edges() {
        let img = GrayImage::new(17, 19, vec![1.0; 17 * 19]).unwrap();
        let half = img.downsample_half();
        assert_eq!((half.width(), half.height()), (8, 9));
    }
}
