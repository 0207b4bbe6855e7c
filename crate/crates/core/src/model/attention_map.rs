use image::{Rgb, RgbImage};

use super::TensorF;
use crate::markup::ClassId;
use crate::raster::Raster;

/// Weights below `low` are not shown; weights above `high` are shown at
/// full intensity.
pub const DISPLAY_RANGE: (f64, f64) = (0.02, 0.25);

/// Nearest-neighbour upsampling of an (H_f, W_f) map by the encoder
/// stride, cut to `(height, width)`.
pub fn upsample(map: &TensorF, stride: (usize, usize), height: usize, width: usize) -> Vec<f64> {
    let (hf, wf) = (map.shape()[0], map.shape()[1]);
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        let fy = (y / stride.0).min(hf.saturating_sub(1));
        for x in 0..width {
            let fx = (x / stride.1).min(wf.saturating_sub(1));
            out[y * width + x] = map.at2(fy, fx);
        }
    }
    out
}

/// Display intensity in [0, 1] of an attention weight.
pub fn intensity(w: f64) -> f64 {
    let (lo, hi) = DISPLAY_RANGE;
    ((w - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn blend(base: f32, color: [u8; 3], a: f64) -> Rgb<u8> {
    Rgb(color.map(|c| ((1.0 - a) * base as f64 + a * c as f64).round().clamp(0.0, 255.0) as u8))
}

/// The page with one step's attention drawn in red.
pub fn overlay(image: &Raster, map: &TensorF, stride: (usize, usize)) -> RgbImage {
    let (h, w) = (image.height(), image.width());
    let up = upsample(map, stride, h, w);
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        blend(image.data()[i], [255, 0, 0], 0.8 * intensity(up[i]))
    })
}

/// Fixed colour per class index.
pub fn class_color(i: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 8] = [
        [230, 25, 75],
        [60, 180, 75],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [128, 128, 0],
    ];
    PALETTE[i % PALETTE.len()]
}

/// All steps on one page: each step is coloured by the class of the
/// layout token emitted last before it (`None` draws grey), and the
/// strongest step wins at every pixel.
pub fn combined(
    image: &Raster,
    maps: &[TensorF],
    classes: &[Option<ClassId>],
    order: &[ClassId],
    stride: (usize, usize),
) -> RgbImage {
    let (h, w) = (image.height(), image.width());
    let mut best = vec![(0.0, [128u8, 128, 128]); h * w];
    for (map, class) in maps.iter().zip(classes) {
        let color = class
            .and_then(|c| order.iter().position(|k| *k == c))
            .map_or([128, 128, 128], class_color);
        for (b, v) in best.iter_mut().zip(upsample(map, stride, h, w)) {
            let a = intensity(v);
            if a > b.0 {
                *b = (a, color);
            }
        }
    }
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        blend(image.data()[i], best[i].1, 0.8 * best[i].0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsampled_size_and_values() {
        let m = TensorF::new(vec![2, 3], vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let up = upsample(&m, (32, 8), 50, 20);
        assert_eq!(up.len(), 1000);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[19], 0.2);
        assert_eq!(up[40 * 20 + 9], 0.4);
        let page = Raster::new(50, 20, 255.0);
        let o = overlay(&page, &m, (32, 8));
        assert_eq!(o.dimensions(), (20, 50));
    }

    #[test]
    fn display_clamp() {
        assert_eq!(intensity(0.01), 0.0);
        assert_eq!(intensity(0.3), 1.0);
        assert!((intensity(0.135) - 0.5).abs() < 1e-12);
    }
}
