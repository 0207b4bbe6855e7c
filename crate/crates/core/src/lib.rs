//! Handwritten document recognition toolkit.
//!
//! - [`markup`]: layout-token alphabet, transcript markup, grammars, layout
//!   graphs and post-processing.
//! - [`manifest`]: tab-separated document lists.
//! - [`metrics`]: CER, WER, LOER, mAP_CER and PPER.
//! - [`model`]: the page encoder-decoder, its layers and checkpoints.
//! - [`raster`]: grayscale page images.
//! - [`synth`]: synthetic printed lines and documents, curriculum schedule.
//! - [`train`]: line pre-training, weight transfer and page training.

pub mod manifest;
pub mod markup;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod synth;
pub mod train;
