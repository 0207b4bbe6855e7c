use serde::{Deserialize, Serialize};

use super::{ModelError, TensorF};
use crate::raster::Raster;

/// Resolution images are brought to before encoding.
pub const TARGET_DPI: f64 = 150.0;

/// Pixel statistics used to centre and scale inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Default for Normalization {
    /// Mostly-white scanned pages.
    fn default() -> Self {
        Normalization { mean: 230.0, std: 60.0 }
    }
}

impl Normalization {
    /// Mean and standard deviation of one image.
    pub fn of(r: &Raster) -> Self {
        let n = r.data().len().max(1) as f64;
        let mean = r.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = r.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        Normalization { mean, std: var.sqrt() }
    }

    /// Pooled statistics of several images.
    pub fn of_all<'a>(images: impl IntoIterator<Item = &'a Raster>) -> Self {
        let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
        for r in images {
            for &v in r.data() {
                n += 1.0;
                s += v as f64;
                s2 += (v as f64) * (v as f64);
            }
        }
        if n == 0.0 {
            return Self::default();
        }
        let mean = s / n;
        Normalization {
            mean,
            std: (s2 / n - mean * mean).max(0.0).sqrt(),
        }
    }
}

/// Bilinear rescale from `source_dpi` to [`TARGET_DPI`].
pub fn rescale_to_dpi(raw: &Raster, source_dpi: f64) -> Result<Raster, ModelError> {
    if raw.height() == 0 || raw.width() == 0 {
        return Err(ModelError::EmptyImage);
    }
    let f = TARGET_DPI / source_dpi;
    if !(f.is_finite() && f > 0.0) {
        return Err(ModelError::InvalidConfig(format!("source resolution {source_dpi} dpi")));
    }
    let h = ((raw.height() as f64 * f).round() as usize).max(1);
    let w = ((raw.width() as f64 * f).round() as usize).max(1);
    Ok(if (h, w) == (raw.height(), raw.width()) {
        raw.clone()
    } else {
        raw.resize_bilinear(h, w)
    })
}

/// Grayscale raster to a normalised (1, H, W) model input at 150 dpi.
pub fn preprocess_image(raw: &Raster, source_dpi: f64, norm: &Normalization) -> Result<TensorF, ModelError> {
    let r = rescale_to_dpi(raw, source_dpi)?;
    let std = if norm.std > 0.0 { norm.std } else { 1.0 };
    let data = r.data().iter().map(|&v| (v as f64 - norm.mean) / std).collect();
    TensorF::new(vec![1, r.height(), r.width()], data)
}
