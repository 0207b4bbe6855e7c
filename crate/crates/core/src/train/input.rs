use crate::model::{preprocess_image, ModelError, Normalization, TensorF, TARGET_DPI};
use crate::raster::{Raster, WHITE};

/// `img` extended with white on the right and bottom to at least
/// `height` x `width`.
pub fn pad_to(img: &Raster, height: usize, width: usize) -> Raster {
    if img.height() >= height && img.width() >= width {
        return img.clone();
    }
    let mut out = Raster::new(img.height().max(height), img.width().max(width), WHITE);
    out.draw_min(img, 0, 0);
    out
}

/// Network input for a page already at the working resolution, padded to
/// one encoder stride if smaller.
pub fn page_input(img: &Raster, norm: &Normalization, stride: (usize, usize)) -> Result<TensorF, ModelError> {
    preprocess_image(&pad_to(img, stride.0, stride.1), TARGET_DPI, norm)
}

/// Network input for a text line, widened so the encoder yields at least
/// `frames` columns.
pub fn line_input(
    img: &Raster,
    norm: &Normalization,
    stride: (usize, usize),
    frames: usize,
) -> Result<TensorF, ModelError> {
    preprocess_image(&pad_to(img, stride.0, stride.1 * frames.max(1)), TARGET_DPI, norm)
}
