use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grayscale raster with a physical scale.
///
/// Pixels are stored row-major; `x` is the column index and `y` the row
/// index, so `y` grows downwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    /// Pixels per centimetre.
    resolution: f64,
    origin_label: String,
}

impl ImageGrid {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        resolution: f64,
        origin_label: impl Into<String>,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidParameter(format!(
                "image must be at least 2x2, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite pixel at ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            resolution,
            origin_label: origin_label.into(),
        })
    }

    pub fn filled(width: usize, height: usize, value: f64, resolution: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], resolution, "constant")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin_label(&self) -> &str {
        &self.origin_label
    }

    pub fn set_origin_label(&mut self, label: impl Into<String>) {
        self.origin_label = label.into();
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Copies the `size`×`size` block whose top-left corner is `(x0, y0)`.
    pub fn block(&self, x0: usize, y0: usize, size: usize) -> Vec<f64> {
        self.region(x0, y0, size, size)
    }

    /// Copies the `w`×`h` region whose top-left corner is `(x0, y0)`.
    pub fn region(&self, x0: usize, y0: usize, w: usize, h: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            out.extend_from_slice(&self.row(y)[x0..x0 + w]);
        }
        out
    }

    /// Quarter turn of the raster: `new(x', y') = old(w - 1 - y', x')`.
    ///
    /// Frequencies map as `(f_x, f_y) -> (f_y, -f_x)`; since a power
    /// spectrum is point-symmetric this equals a +90° rotation of the PSD.
    pub fn rotate90(&self) -> ImageGrid {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                out[(w - 1 - x) * h + y] = self.pixels[y * w + x];
            }
        }
        ImageGrid {
            width: h,
            height: w,
            pixels: out,
            resolution: self.resolution,
            origin_label: format!("{} (rotated 90)", self.origin_label),
        }
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.pixels.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / self.pixels.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions_and_resolution() {
        assert!(ImageGrid::new(1, 5, vec![0.0; 5], 1.0, "").is_err());
        assert!(ImageGrid::new(2, 2, vec![0.0; 3], 1.0, "").is_err());
        assert!(ImageGrid::new(2, 2, vec![0.0; 4], 0.0, "").is_err());
        assert!(ImageGrid::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0], 1.0, "").is_err());
    }

    #[test]
    fn rotate90_four_times_is_identity() {
        let px: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let g = ImageGrid::new(4, 3, px, 10.0, "t").unwrap();
        let r = g.rotate90();
        assert_eq!((r.width(), r.height()), (3, 4));
        let back = r.rotate90().rotate90().rotate90();
        assert_eq!(back.pixels(), g.pixels());
    }

    #[test]
    fn block_extracts_rows() {
        let px: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let g = ImageGrid::new(4, 4, px, 1.0, "").unwrap();
        assert_eq!(g.block(1, 2, 2), vec![9.0, 10.0, 13.0, 14.0]);
    }
}
