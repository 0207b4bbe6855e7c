use nalgebra::{SMatrix, SVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::raster::{Raster, WHITE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Resolution,
    Perspective,
    Elastic,
    Dilation,
    Erosion,
    ColorJitter,
    GaussianBlur,
    GaussianNoise,
    Sharpen,
}

impl Transform {
    pub const ALL: [Transform; 9] = [
        Transform::Resolution,
        Transform::Perspective,
        Transform::Elastic,
        Transform::Dilation,
        Transform::Erosion,
        Transform::ColorJitter,
        Transform::GaussianBlur,
        Transform::GaussianNoise,
        Transform::Sharpen,
    ];

    pub fn apply(self, img: &Raster, cfg: &AugmentConfig, rng: &mut impl Rng) -> Raster {
        let pick = |r: (f64, f64), rng: &mut dyn rand::RngCore| {
            if r.1 > r.0 {
                rng.gen_range(r.0..=r.1)
            } else {
                r.0
            }
        };
        match self {
            Transform::Resolution => {
                let f = pick(cfg.scale, rng);
                let h = ((img.height() as f64 * f).round() as usize).max(1);
                let w = ((img.width() as f64 * f).round() as usize).max(1);
                img.resize_bilinear(h, w)
            }
            Transform::Perspective => perspective(img, cfg.perspective, rng),
            Transform::Elastic => elastic(img, cfg.elastic_alpha, cfg.elastic_sigma, rng),
            Transform::Dilation => dilate(img, cfg.kernel),
            Transform::Erosion => erode(img, cfg.kernel),
            Transform::ColorJitter => {
                let c = pick(cfg.contrast, rng) as f32;
                let b = pick(cfg.brightness, rng) as f32;
                map(img, |v| (v - 128.0) * c + 128.0 + b)
            }
            Transform::GaussianBlur => gaussian_blur(img, pick(cfg.blur_sigma, rng)),
            Transform::GaussianNoise => gaussian_noise(img, pick(cfg.noise_std, rng), rng),
            Transform::Sharpen => {
                let a = pick(cfg.sharpen, rng) as f32;
                let soft = gaussian_blur(img, 1.0);
                let data = img.data().iter().zip(soft.data()).map(|(v, s)| v + a * (v - s)).collect();
                clamp(Raster::from_vec(img.height(), img.width(), data).expect("same size"))
            }
        }
    }
}

/// Augmentation settings. Ranges are inclusive `(min, max)` pairs drawn
/// uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Chance that the pipeline runs at all.
    pub probability: f64,
    /// Chance of each transform once the pipeline runs.
    pub transform_probability: f64,
    pub transforms: Vec<Transform>,
    pub scale: (f64, f64),
    /// Largest corner shift as a fraction of the image side.
    pub perspective: f64,
    /// Largest displacement in pixels.
    pub elastic_alpha: f64,
    /// Smoothness of the displacement field.
    pub elastic_sigma: f64,
    /// Side of the square structuring element.
    pub kernel: usize,
    pub contrast: (f64, f64),
    pub brightness: (f64, f64),
    pub blur_sigma: (f64, f64),
    pub noise_std: (f64, f64),
    pub sharpen: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            probability: 0.9,
            transform_probability: 0.1,
            transforms: Transform::ALL.to_vec(),
            scale: (0.75, 1.25),
            perspective: 0.04,
            elastic_alpha: 2.0,
            elastic_sigma: 5.0,
            kernel: 3,
            contrast: (0.8, 1.2),
            brightness: (-20.0, 20.0),
            blur_sigma: (0.5, 1.2),
            noise_std: (2.0, 8.0),
            sharpen: (0.5, 1.5),
        }
    }
}

impl AugmentConfig {
    /// A pipeline that never runs.
    pub fn off() -> Self {
        AugmentConfig {
            probability: 0.0,
            ..Self::default()
        }
    }
}

/// Randomly ordered subset of the configured transforms, gated by
/// `cfg.probability`.
pub fn augment(img: &Raster, rng: &mut impl Rng, cfg: &AugmentConfig) -> Raster {
    if !rng.gen_bool(cfg.probability.clamp(0.0, 1.0)) {
        return img.clone();
    }
    let mut order = cfg.transforms.clone();
    order.shuffle(rng);
    let mut out = img.clone();
    for t in order {
        if rng.gen_bool(cfg.transform_probability.clamp(0.0, 1.0)) {
            out = t.apply(&out, cfg, rng);
        }
    }
    out
}

fn map(img: &Raster, f: impl Fn(f32) -> f32) -> Raster {
    let data = img.data().iter().map(|&v| f(v).clamp(0.0, 255.0)).collect();
    Raster::from_vec(img.height(), img.width(), data).expect("same size")
}

fn clamp(img: Raster) -> Raster {
    map(&img, |v| v)
}

/// Bilinear read at a real position; white outside the image.
fn sample(img: &Raster, y: f64, x: f64) -> f32 {
    let (h, w) = (img.height() as f64, img.width() as f64);
    if !(y > -1.0 && x > -1.0 && y < h && x < w) {
        return WHITE;
    }
    let (y0, x0) = (y.floor(), x.floor());
    let (wy, wx) = ((y - y0) as f32, (x - x0) as f32);
    let at = |yy: f64, xx: f64| {
        if yy < 0.0 || xx < 0.0 || yy >= h || xx >= w {
            WHITE
        } else {
            img.get(yy as usize, xx as usize)
        }
    };
    let top = at(y0, x0) * (1.0 - wx) + at(y0, x0 + 1.0) * wx;
    let bottom = at(y0 + 1.0, x0) * (1.0 - wx) + at(y0 + 1.0, x0 + 1.0) * wx;
    (top * (1.0 - wy) + bottom * wy).clamp(0.0, 255.0)
}

/// Projective map sending each `from` corner to its `to` corner, as a
/// row-major 3x3 matrix.
pub fn homography(from: [(f64, f64); 4], to: [(f64, f64); 4]) -> Option<[f64; 9]> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (&(x, y), &(u, v))) in from.iter().zip(&to).enumerate() {
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    Some([h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0])
}

fn perspective(img: &Raster, amount: f64, rng: &mut impl Rng) -> Raster {
    let (h, w) = (img.height() as f64, img.width() as f64);
    let corners = [(0.0, 0.0), (w - 1.0, 0.0), (w - 1.0, h - 1.0), (0.0, h - 1.0)];
    let mut jitter = |(x, y): (f64, f64)| {
        let dx = if amount > 0.0 { rng.gen_range(-amount..=amount) * w } else { 0.0 };
        let dy = if amount > 0.0 { rng.gen_range(-amount..=amount) * h } else { 0.0 };
        (x + dx, y + dy)
    };
    let moved = corners.map(&mut jitter);
    // Each output pixel reads from where the inverse map sends it.
    let Some(m) = homography(moved, corners) else {
        return img.clone();
    };
    let mut out = Raster::new(img.height(), img.width(), WHITE);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (xf, yf) = (x as f64, y as f64);
            let z = m[6] * xf + m[7] * yf + m[8];
            let sx = (m[0] * xf + m[1] * yf + m[2]) / z;
            let sy = (m[3] * xf + m[4] * yf + m[5]) / z;
            out.set(y, x, sample(img, sy, sx));
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable convolution of a row-major `h` x `w` buffer, replicating
/// the border.
fn smooth(data: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * data[y * w + (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[(y as isize + i as isize - r).clamp(0, h as isize - 1) as usize * w + x])
                .sum();
        }
    }
    out
}

pub fn gaussian_blur(img: &Raster, sigma: f64) -> Raster {
    if sigma <= 0.0 {
        return img.clone();
    }
    let data: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let out = smooth(&data, img.height(), img.width(), sigma);
    Raster::from_vec(img.height(), img.width(), out.into_iter().map(|v| v as f32).collect()).expect("same size")
}

pub fn gaussian_noise(img: &Raster, std: f64, rng: &mut impl Rng) -> Raster {
    let Ok(n) = Normal::new(0.0, std) else {
        return img.clone();
    };
    let data = img
        .data()
        .iter()
        .map(|&v| (v as f64 + n.sample(rng)).clamp(0.0, 255.0) as f32)
        .collect();
    Raster::from_vec(img.height(), img.width(), data).expect("same size")
}

fn elastic(img: &Raster, alpha: f64, sigma: f64, rng: &mut impl Rng) -> Raster {
    let (h, w) = (img.height(), img.width());
    let field = |rng: &mut dyn rand::RngCore| {
        let raw: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let s = smooth(&raw, h, w, sigma);
        let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        s.into_iter().map(|v| if peak > 0.0 { alpha * v / peak } else { 0.0 }).collect::<Vec<f64>>()
    };
    let dx = field(rng);
    let dy = field(rng);
    let mut out = Raster::new(h, w, WHITE);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            out.set(y, x, sample(img, y as f64 + dy[i], x as f64 + dx[i]));
        }
    }
    out
}

fn window(img: &Raster, k: usize, pick: impl Fn(f32, f32) -> f32) -> Raster {
    let (h, w) = (img.height(), img.width());
    let lo = (k.max(1) - 1) / 2;
    let hi = k.max(1) / 2;
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let mut v = img.get(y, x);
            for yy in y.saturating_sub(lo)..=(y + hi).min(h - 1) {
                for xx in x.saturating_sub(lo)..=(x + hi).min(w - 1) {
                    v = pick(v, img.get(yy, xx));
                }
            }
            out.set(y, x, v);
        }
    }
    out
}

/// Thickens dark strokes: minimum over a `k` x `k` window.
pub fn dilate(img: &Raster, k: usize) -> Raster {
    window(img, k, f32::min)
}

/// Thins dark strokes: maximum over a `k` x `k` window.
pub fn erode(img: &Raster, k: usize) -> Raster {
    window(img, k, f32::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_homography() {
        let c = [(0.0, 0.0), (9.0, 0.0), (9.0, 4.0), (0.0, 4.0)];
        let m = homography(c, c).unwrap();
        for (a, b) in m.iter().zip([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn every_transform_keeps_values_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut img = Raster::new(20, 30, WHITE);
        for y in 5..15 {
            for x in 4..26 {
                img.set(y, x, 0.0);
            }
        }
        let cfg = AugmentConfig::default();
        for t in Transform::ALL {
            let out = t.apply(&img, &cfg, &mut rng);
            assert!(out.data().iter().all(|v| (0.0..=255.0).contains(v)), "{t:?}");
            if t != Transform::Resolution {
                assert_eq!((out.height(), out.width()), (20, 30), "{t:?}");
            }
        }
    }

    #[test]
    fn gate_closed_is_identity() {
        let img = Raster::new(4, 4, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&img, &mut rng, &AugmentConfig::off()), img);
    }
}
