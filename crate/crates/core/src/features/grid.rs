use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-overlapping square block grid over the normalized frame, with the four
/// corner blocks and the central 2×2 blocks removed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGrid {
    image_side: usize,
    grid_n: usize,
    block_px: usize,
    retained: Vec<(usize, usize)>,
}

impl BlockGrid {
    pub fn new(image_side: usize, grid_n: usize) -> Result<Self> {
        if grid_n < 4 || !grid_n.is_multiple_of(2) {
            return Err(Error::config(format!(
                "grid_n must be even and >= 4, got {grid_n}"
            )));
        }
        let block_px = image_side / grid_n;
        if block_px == 0 {
            return Err(Error::config(format!(
                "image side {image_side} too small for a {grid_n}x{grid_n} grid"
            )));
        }
        let last = grid_n - 1;
        let mid = grid_n / 2;
        let is_corner = |r: usize, c: usize| (r == 0 || r == last) && (c == 0 || c == last);
        let is_center = |r: usize, c: usize| (mid - 1..=mid).contains(&r) && (mid - 1..=mid).contains(&c);
        let retained = (0..grid_n)
            .flat_map(|r| (0..grid_n).map(move |c| (r, c)))
            .filter(|&(r, c)| !is_corner(r, c) && !is_center(r, c))
            .collect();
        Ok(BlockGrid {
            image_side,
            grid_n,
            block_px,
            retained,
        })
    }

    pub fn image_side(&self) -> usize {
        self.image_side
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn block_px(&self) -> usize {
        self.block_px
    }

    /// Retained `(row, col)` block indices, row-major.
    pub fn retained(&self) -> &[(usize, usize)] {
        &self.retained
    }

    /// Pixel ranges `(x0..x1, y0..y1)` of a block.
    pub fn block_bounds(&self, (row, col): (usize, usize)) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let b = self.block_px;
        (col * b..(col + 1) * b, row * b..(row + 1) * b)
    }

    /// Pixel at the center of a block.
    pub fn block_center(&self, (row, col): (usize, usize)) -> (usize, usize) {
        let b = self.block_px;
        (col * b + b / 2, row * b + b / 2)
    }
}

/// Builds the block grid for a square image of side `image_side`.
pub fn make_grid(image_side: usize, grid_n: usize) -> Result<BlockGrid> {
    BlockGrid::new(image_side, grid_n)
}
