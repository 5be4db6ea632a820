use std::f64::consts::PI;

use super::{check_frame, l1_normalize, BlockGrid, ExtractorKind, Template};
use crate::dataset::SampleKey;
use crate::error::Result;
use crate::preproc::GrayImage;

pub const HOG_BINS: usize = 8;

/// Central-difference gradient at `(x, y)`, edge-replicated.
#[inline]
fn gradient(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let (x, y) = (x as isize, y as isize);
    let gx = img.get_clamped(x + 1, y) - img.get_clamped(x - 1, y);
    let gy = img.get_clamped(x, y + 1) - img.get_clamped(x, y - 1);
    (gx, gy)
}

/// Unsigned orientation bin in `[0°, 180°)`.
#[inline]
fn orientation_bin(gx: f64, gy: f64) -> usize {
    let mut theta = gy.atan2(gx);
    if theta < 0.0 {
        theta += PI;
    }
    if theta >= PI {
        theta -= PI;
    }
    ((theta / PI * HOG_BINS as f64) as usize).min(HOG_BINS - 1)
}

/// Per-block magnitude-weighted orientation histograms, L1-normalized. A
/// block without any gradient gets the uniform histogram.
pub fn extract_hog(img: &GrayImage, grid: &BlockGrid, sample_key: SampleKey) -> Result<Template> {
    check_frame(img, grid)?;
    let mut vector = Vec::with_capacity(grid.retained().len() * HOG_BINS);
    for &block in grid.retained() {
        let (xs, ys) = grid.block_bounds(block);
        let mut hist = [0.0f64; HOG_BINS];
        for y in ys {
            for x in xs.clone() {
                let (gx, gy) = gradient(img, x, y);
                let mag = gx.hypot(gy);
                if mag > 0.0 {
                    hist[orientation_bin(gx, gy)] += mag;
                }
            }
        }
        l1_normalize(&mut hist);
        vector.extend_from_slice(&hist);
    }
    Ok(Template::assemble(ExtractorKind::Hog, sample_key, grid, HOG_BINS, vector))
}
