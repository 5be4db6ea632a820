//! Block-based texture templates: Gabor magnitudes, LBP and HOG histograms.
//!
//! All three extractors share one [`BlockGrid`]. Template vectors are the
//! per-block descriptors concatenated in the grid's retained (row-major) order,
//! so two templates of the same kind and grid are directly comparable.

mod gabor;
mod grid;
mod hog;
mod lbp;

pub use gabor::{extract_gabor, GaborBank, GaborParams};
pub use grid::{make_grid, BlockGrid};
pub use hog::{extract_hog, HOG_BINS};
pub use lbp::{extract_lbp, lbp_code, LBP_BINS};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::SampleKey;
use crate::error::{Error, Result};
use crate::preproc::GrayImage;

/// Built-in comparators whose templates this crate extracts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Gabor,
    Lbp,
    Hog,
}

impl ExtractorKind {
    pub const ALL: [ExtractorKind; 3] = [ExtractorKind::Gabor, ExtractorKind::Lbp, ExtractorKind::Hog];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExtractorKind::Gabor => "gabor",
            ExtractorKind::Lbp => "lbp",
            ExtractorKind::Hog => "hog",
        }
    }
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gabor" => Ok(ExtractorKind::Gabor),
            "lbp" => Ok(ExtractorKind::Lbp),
            "hog" => Ok(ExtractorKind::Hog),
            other => Err(Error::config(format!("'{other}' is not a built-in extractor"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateMeta {
    pub grid_n: usize,
    /// Descriptor length per block (channels or histogram bins).
    pub dims_per_block: usize,
    pub blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub comparator_id: ExtractorKind,
    pub sample_key: SampleKey,
    pub meta: TemplateMeta,
    pub vector: Vec<f64>,
}

impl Template {
    pub(crate) fn assemble(
        kind: ExtractorKind,
        sample_key: SampleKey,
        grid: &BlockGrid,
        dims_per_block: usize,
        vector: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(vector.len(), grid.retained().len() * dims_per_block);
        Template {
            comparator_id: kind,
            sample_key,
            meta: TemplateMeta {
                grid_n: grid.grid_n(),
                dims_per_block,
                blocks: grid.retained().len(),
            },
            vector,
        }
    }

    /// Per-block slices of the vector.
    pub fn blocks(&self) -> std::slice::Chunks<'_, f64> {
        self.vector.chunks(self.meta.dims_per_block)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vector.len() != self.meta.blocks * self.meta.dims_per_block {
            return Err(Error::data(format!(
                "{} template for {}: vector length {} does not match meta",
                self.comparator_id,
                self.sample_key,
                self.vector.len()
            )));
        }
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "{} template for {} has non-finite entries",
                self.comparator_id, self.sample_key
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: Template = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

pub(crate) fn check_frame(img: &GrayImage, grid: &BlockGrid) -> Result<()> {
    if img.width() != grid.image_side() || img.height() != grid.image_side() {
        return Err(Error::data(format!(
            "grid built for {0}x{0} frames, image is {1}x{2}",
            grid.image_side(),
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Runs one extractor.
pub fn extract(
    kind: ExtractorKind,
    img: &GrayImage,
    grid: &BlockGrid,
    gabor: &GaborBank,
    sample_key: SampleKey,
) -> Result<Template> {
    match kind {
        ExtractorKind::Gabor => extract_gabor(img, grid, gabor, sample_key),
        ExtractorKind::Lbp => extract_lbp(img, grid, sample_key),
        ExtractorKind::Hog => extract_hog(img, grid, sample_key),
    }
}

/// L1-normalizes a histogram in place; an empty histogram becomes uniform.
pub(crate) fn l1_normalize(hist: &mut [f64]) {
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|h| *h /= total);
    } else {
        let u = 1.0 / hist.len() as f64;
        hist.iter_mut().for_each(|h| *h = u);
    }
}
