//! Single-channel images with `f32` intensities in `0.0..=255.0`
//! (255 is white paper, 0 is ink).

use std::path::Path;

use image::{GrayImage, Luma};
use thiserror::Error;

pub const WHITE: f32 = 255.0;
pub const INK: f32 = 0.0;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image file: {0}")]
    Image(#[from] image::ImageError),
    #[error("{width}x{height} raster needs {expected} values, got {got}")]
    Shape {
        height: usize,
        width: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(height: usize, width: usize, fill: f32) -> Self {
        Raster {
            height,
            width,
            data: vec![fill; height * width],
        }
    }

    /// Row-major pixels.
    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        if data.len() != height * width {
            return Err(RasterError::Shape {
                height,
                width,
                expected: height * width,
                got: data.len(),
            });
        }
        Ok(Raster { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Draws `src` with its top-left corner at `(top, left)`, keeping the
    /// darker pixel wherever the two overlap. Parts outside are dropped.
    pub fn draw_min(&mut self, src: &Raster, top: usize, left: usize) {
        for y in 0..src.height {
            let ty = top + y;
            if ty >= self.height {
                break;
            }
            for x in 0..src.width {
                let tx = left + x;
                if tx >= self.width {
                    break;
                }
                let v = src.get(y, x);
                let d = &mut self.data[ty * self.width + tx];
                if v < *d {
                    *d = v;
                }
            }
        }
    }

    /// Keeps the first `height` rows, padding with white when taller.
    pub fn with_height(&self, height: usize) -> Raster {
        let mut out = Raster::new(height, self.width, WHITE);
        let rows = height.min(self.height);
        out.data[..rows * self.width].copy_from_slice(&self.data[..rows * self.width]);
        out
    }

    /// Bilinear resampling with half-pixel centre alignment.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Raster {
        let mut out = Raster::new(height, width, WHITE);
        if self.height == 0 || self.width == 0 {
            return out;
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = (fy - y0 as f64) as f32;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = (fx - x0 as f64) as f32;
                let top = self.get(y0, x0) * (1.0 - wx) + self.get(y0, x1) * wx;
                let bottom = self.get(y1, x0) * (1.0 - wx) + self.get(y1, x1) * wx;
                out.set(y, x, top * (1.0 - wy) + bottom * wy);
            }
        }
        out
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([self.get(y as usize, x as usize).round().clamp(0.0, 255.0) as u8])
        })
    }

    pub fn from_gray_image(img: &GrayImage) -> Raster {
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| p.0[0] as f32).collect();
        Raster {
            height: h as usize,
            width: w as usize,
            data,
        }
    }

    /// Writes PNG or PGM, chosen by extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        self.to_gray_image().save(path)?;
        Ok(())
    }

    /// Reads any supported format, converting colour to luminance.
    pub fn load(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
        let img = image::open(path)?.into_luma8();
        Ok(Raster::from_gray_image(&img))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draw_keeps_darker_pixels() {
        let mut page = Raster::new(3, 3, WHITE);
        let mut stamp = Raster::new(2, 2, 200.0);
        stamp.set(0, 0, INK);
        page.draw_min(&stamp, 1, 2);
        assert_eq!(page.get(1, 2), INK);
        assert_eq!(page.get(2, 2), 200.0);
        assert_eq!(page.get(0, 0), WHITE);
    }

    #[test]
    fn height_change_crops_or_pads() {
        let r = Raster::new(4, 2, INK);
        assert_eq!(r.with_height(2).data(), &[INK; 4]);
        let p = r.with_height(5);
        assert_eq!(p.get(4, 1), WHITE);
        assert_eq!(p.get(3, 1), INK);
    }

    #[test]
    fn resize_identity_and_constant() {
        let r = Raster::from_vec(2, 3, vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]).unwrap();
        assert_eq!(r.resize_bilinear(2, 3), r);
        let c = Raster::new(5, 7, 42.0).resize_bilinear(3, 11);
        assert!(c.data().iter().all(|&v| v == 42.0));
    }

    #[test]
    fn png_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::from_vec(2, 2, vec![0.0, 64.0, 128.0, 255.0]).unwrap();
        for name in ["a.png", "a.pgm"] {
            let path = dir.path().join(name);
            r.save(&path).unwrap();
            assert_eq!(Raster::load(&path).unwrap(), r);
        }
    }
}
