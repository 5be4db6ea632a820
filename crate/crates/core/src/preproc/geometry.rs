use std::ops::Deref;

use super::GrayImage;
use crate::dataset::CircleAnnotation;
use crate::error::{Error, Result};

/// Common sclera radius every image is rescaled to, in pixels.
pub const SCLERA_RADIUS: f64 = 145.0;

/// Side of the normalized frame: `6 * 145 + 1`, so the sclera center lands on
/// an exact pixel.
pub const FRAME_SIDE: usize = 871;

const MIN_SCALE: f64 = 0.05;
const MAX_SCALE: f64 = 20.0;

/// Keys cubic convolution parameter.
const CUBIC_A: f64 = -0.5;

/// An image rescaled to the common sclera radius and cropped to the
/// 871×871 frame centered on the sclera.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedImage {
    image: GrayImage,
    scale_factor: f64,
}

impl NormalizedImage {
    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    pub fn into_inner(self) -> GrayImage {
        self.image
    }

    /// Wraps an already normalized frame, e.g. one read back from disk.
    pub fn from_frame(image: GrayImage, scale_factor: f64) -> Result<Self> {
        if image.width() != FRAME_SIDE || image.height() != FRAME_SIDE {
            return Err(Error::data(format!(
                "normalized frame must be {FRAME_SIDE}x{FRAME_SIDE}, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(NormalizedImage {
            image,
            scale_factor,
        })
    }

    /// Replaces the pixels, keeping the frame metadata.
    pub(crate) fn with_image(&self, image: GrayImage) -> Self {
        debug_assert_eq!(image.width(), self.image.width());
        NormalizedImage {
            image,
            scale_factor: self.scale_factor,
        }
    }
}

impl Deref for NormalizedImage {
    type Target = GrayImage;

    fn deref(&self) -> &GrayImage {
        &self.image
    }
}

#[inline]
fn cubic(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((CUBIC_A + 2.0) * t - (CUBIC_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((CUBIC_A * t - 5.0 * CUBIC_A) * t + 8.0 * CUBIC_A) * t - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Source taps and normalized weights for sampling at `pos`. When
/// downscaling, the kernel is stretched by `support` to avoid aliasing.
fn taps(pos: f64, support: f64, len: usize) -> Vec<(usize, f64)> {
    let radius = 2.0 * support;
    let lo = (pos - radius).floor() as isize;
    let hi = (pos + radius).ceil() as isize;
    let mut out: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
    let mut total = 0.0;
    for i in lo..=hi {
        let w = cubic((i as f64 - pos) / support);
        if w == 0.0 {
            continue;
        }
        let idx = i.clamp(0, len as isize - 1) as usize;
        total += w;
        match out.last_mut() {
            Some(last) if last.0 == idx => last.1 += w,
            _ => out.push((idx, w)),
        }
    }
    for t in &mut out {
        t.1 /= total;
    }
    out
}

/// Bicubic sample of `img` at a subpixel position, edge-replicated.
pub fn bicubic_sample(img: &GrayImage, x: f64, y: f64) -> f64 {
    let tx = taps(x, 1.0, img.width());
    let ty = taps(y, 1.0, img.height());
    let mut acc = 0.0;
    for &(yi, wy) in &ty {
        let mut row = 0.0;
        for &(xi, wx) in &tx {
            row += wx * img.get(xi, yi);
        }
        acc += wy * row;
    }
    acc
}

/// Rescales `img` so the annotated sclera radius becomes 145 px (bicubic) and
/// extracts the 871×871 window centered on the scaled sclera center.
/// Regions outside the source are filled by edge replication.
pub fn normalize_geometry(img: &GrayImage, ann: &CircleAnnotation) -> Result<NormalizedImage> {
    if !(ann.sclera_radius > 0.0) {
        return Err(Error::data(format!(
            "sclera radius must be positive for {}",
            ann.sample
        )));
    }
    let scale = SCLERA_RADIUS / ann.sclera_radius;
    if !(MIN_SCALE..=MAX_SCALE).contains(&scale) {
        return Err(Error::data(format!(
            "degenerate annotation for {}: scale factor {scale:.4} outside [{MIN_SCALE}, {MAX_SCALE}]",
            ann.sample
        )));
    }
    ann.check_bounds(img.width(), img.height())?;

    let support = (1.0 / scale).max(1.0);
    let half = (FRAME_SIDE / 2) as f64;
    let (cx, cy) = ann.sclera_center;
    let src = |u: usize, c: f64| c + (u as f64 - half) / scale;

    let col_taps: Vec<_> = (0..FRAME_SIDE)
        .map(|u| taps(src(u, cx), support, img.width()))
        .collect();
    let row_taps: Vec<_> = (0..FRAME_SIDE)
        .map(|v| taps(src(v, cy), support, img.height()))
        .collect();

    // horizontal pass over the source rows the vertical taps touch
    let row_lo = row_taps.iter().flatten().map(|t| t.0).min().unwrap_or(0);
    let row_hi = row_taps.iter().flatten().map(|t| t.0).max().unwrap_or(0);
    let mut horiz = vec![0.0; (row_hi - row_lo + 1) * FRAME_SIDE];
    for y in row_lo..=row_hi {
        let line = &mut horiz[(y - row_lo) * FRAME_SIDE..(y - row_lo + 1) * FRAME_SIDE];
        for (u, tx) in col_taps.iter().enumerate() {
            line[u] = tx.iter().map(|&(x, w)| w * img.get(x, y)).sum();
        }
    }

    let mut out = Vec::with_capacity(FRAME_SIDE * FRAME_SIDE);
    for ty in &row_taps {
        for u in 0..FRAME_SIDE {
            let v: f64 = ty
                .iter()
                .map(|&(y, w)| w * horiz[(y - row_lo) * FRAME_SIDE + u])
                .sum();
            out.push(v.clamp(0.0, 1.0));
        }
    }

    Ok(NormalizedImage {
        image: GrayImage::new(FRAME_SIDE, FRAME_SIDE, out)?,
        scale_factor: scale,
    })
}
