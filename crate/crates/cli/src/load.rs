//! Reading inputs named on the command line. Built-in names are tried
//! before file paths.

use std::path::Path;

use docrec::markup::LayoutGrammar;
use docrec::model::{rescale_to_dpi, Checkpoint, TARGET_DPI};
use docrec::raster::Raster;
use docrec::synth::{GlyphSet, LineDataset, StyleSheet};
use serde::de::DeserializeOwned;

use crate::error::{Failure, Result};

pub fn text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Failure::io(path, e))
}

pub fn grammar(spec: &str) -> Result<LayoutGrammar> {
    match LayoutGrammar::builtin(spec) {
        Some(g) => Ok(g),
        None => Ok(LayoutGrammar::parse(&text(Path::new(spec))?).map_err(|e| Failure::from(e).context(spec))?),
    }
}

pub fn sheet(spec: &str) -> Result<StyleSheet> {
    match StyleSheet::builtin(spec) {
        Some(s) => Ok(s),
        None => Ok(StyleSheet::parse(&text(Path::new(spec))?).map_err(|e| Failure::from(e).context(spec))?),
    }
}

/// Comma-separated font names or files; empty means every built-in font.
pub fn fonts(spec: Option<&str>) -> Result<Vec<GlyphSet>> {
    let Some(spec) = spec else {
        return Ok(GlyphSet::builtin_set());
    };
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match GlyphSet::builtin(s) {
            Some(f) => Ok(f),
            None => Ok(GlyphSet::parse(&text(Path::new(s))?).map_err(|e| Failure::from(e).context(s))?),
        })
        .collect()
}

pub fn lines(path: &Path, grammar: &LayoutGrammar) -> Result<LineDataset> {
    LineDataset::parse_tsv(&text(path)?, grammar).map_err(|e| Failure::from(e).context(path.display()))
}

/// A page image brought to the working resolution.
pub fn page(path: &Path, dpi: f64) -> Result<Raster> {
    let raw = Raster::load(path).map_err(|e| Failure::from(e).context(path.display()))?;
    if dpi == TARGET_DPI {
        return Ok(raw);
    }
    Ok(rescale_to_dpi(&raw, dpi)?)
}

pub fn checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).map_err(|e| Failure::from(e).context(path.display()))
}

/// JSON settings file; missing fields take their defaults.
pub fn config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => serde_json::from_str(&text(p)?).map_err(|e| Failure::Validation(format!("{}: {e}", p.display()))),
    }
}
