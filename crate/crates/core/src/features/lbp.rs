use super::{check_frame, l1_normalize, BlockGrid, ExtractorKind, Template};
use crate::dataset::SampleKey;
use crate::error::Result;
use crate::preproc::GrayImage;

pub const LBP_BINS: usize = 8;

/// Neighbor offsets, clockwise from east (image y axis points down).
const NEIGHBORS: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Radius-1, 8-neighbor LBP code at `(x, y)`. Bit `k` is set when neighbor `k`
/// is at least as bright as the center. Borders are edge-replicated.
pub fn lbp_code(img: &GrayImage, x: usize, y: usize) -> u8 {
    let c = img.get(x, y);
    let mut code = 0u8;
    for (bit, (dx, dy)) in NEIGHBORS.iter().enumerate() {
        if img.get_clamped(x as isize + dx, y as isize + dy) >= c {
            code |= 1 << bit;
        }
    }
    code
}

/// Per-block 8-bin histograms of `code / 32`, L1-normalized.
pub fn extract_lbp(img: &GrayImage, grid: &BlockGrid, sample_key: SampleKey) -> Result<Template> {
    check_frame(img, grid)?;
    let mut vector = Vec::with_capacity(grid.retained().len() * LBP_BINS);
    for &block in grid.retained() {
        let (xs, ys) = grid.block_bounds(block);
        let mut hist = [0.0f64; LBP_BINS];
        for y in ys {
            for x in xs.clone() {
                hist[(lbp_code(img, x, y) >> 5) as usize] += 1.0;
            }
        }
        l1_normalize(&mut hist);
        vector.extend_from_slice(&hist);
    }
    Ok(Template::assemble(ExtractorKind::Lbp, sample_key, grid, LBP_BINS, vector))
}
