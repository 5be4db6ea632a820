use serde::{Deserialize, Serialize};

use super::{GrayImage, NormalizedImage};
use crate::error::{Error, Result};

/// Contrast-limited adaptive histogram equalization settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaheParams {
    /// Tiles per side.
    pub tiles: usize,
    pub bins: usize,
    /// Clip limit as a multiple of the mean bin count.
    pub clip_factor: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            tiles: 8,
            bins: 256,
            clip_factor: 4.0,
        }
    }
}

impl ClaheParams {
    pub fn validate(&self) -> Result<()> {
        if self.tiles == 0 || self.tiles > 64 {
            return Err(Error::config(format!("clahe tiles {} outside [1, 64]", self.tiles)));
        }
        if self.bins < 2 || self.bins > 65536 {
            return Err(Error::config(format!("clahe bins {} outside [2, 65536]", self.bins)));
        }
        if !(self.clip_factor >= 1.0 && self.clip_factor.is_finite()) {
            return Err(Error::config("clahe clip_factor must be >= 1"));
        }
        Ok(())
    }
}

/// Tile boundaries along one axis: `n` near-equal spans covering `len`.
fn spans(len: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i * len / n, (i + 1) * len / n)).collect()
}

/// Left tile index and blend weight of the right tile for coordinate `p`,
/// given tile centers.
fn blend(p: f64, centers: &[f64]) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= p) - 1;
    let t = (p - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, t)
}

fn tile_lut(img: &GrayImage, xs: (usize, usize), ys: (usize, usize), p: &ClaheParams) -> Vec<f64> {
    let bins = p.bins;
    let mut hist = vec![0.0f64; bins];
    for y in ys.0..ys.1 {
        for x in xs.0..xs.1 {
            hist[bin_of(img.get(x, y), bins)] += 1.0;
        }
    }
    let total = ((xs.1 - xs.0) * (ys.1 - ys.0)) as f64;
    if total == 0.0 {
        return (0..bins).map(|b| b as f64 / (bins - 1) as f64).collect();
    }
    let limit = p.clip_factor * total / bins as f64;
    let mut excess = 0.0;
    for h in &mut hist {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / bins as f64;
    let mut cdf = 0.0;
    hist.iter()
        .map(|h| {
            cdf += h + share;
            (cdf / total).min(1.0)
        })
        .collect()
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Applies CLAHE on a regular tile grid. Each tile's histogram is clipped at
/// `clip_factor` times the mean bin count, the clipped mass is spread evenly
/// over all bins, and the tile mapping is the normalized cumulative
/// histogram. Mappings are blended bilinearly between tile centers.
pub fn clahe_gray(img: &GrayImage, params: &ClaheParams) -> Result<GrayImage> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let tiles_x = params.tiles.min(w);
    let tiles_y = params.tiles.min(h);
    let xspans = spans(w, tiles_x);
    let yspans = spans(h, tiles_y);
    let center = |s: &(usize, usize)| (s.0 + s.1) as f64 / 2.0 - 0.5;
    let xc: Vec<f64> = xspans.iter().map(center).collect();
    let yc: Vec<f64> = yspans.iter().map(center).collect();

    let luts: Vec<Vec<Vec<f64>>> = yspans
        .iter()
        .map(|&ys| xspans.iter().map(|&xs| tile_lut(img, xs, ys, params)).collect())
        .collect();

    let xblend: Vec<_> = (0..w).map(|x| blend(x as f64, &xc)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (ty0, ty1, fy) = blend(y as f64, &yc);
        for (x, &(tx0, tx1, fx)) in xblend.iter().enumerate() {
            let b = bin_of(img.get(x, y), params.bins);
            let top = (1.0 - fx) * luts[ty0][tx0][b] + fx * luts[ty0][tx1][b];
            let bottom = (1.0 - fx) * luts[ty1][tx0][b] + fx * luts[ty1][tx1][b];
            out.push(((1.0 - fy) * top + fy * bottom).clamp(0.0, 1.0));
        }
    }
    GrayImage::new(w, h, out)
}

/// CLAHE on a normalized frame.
pub fn clahe(img: &NormalizedImage, params: &ClaheParams) -> Result<NormalizedImage> {
    Ok(img.with_image(clahe_gray(img, params)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_stays_uniform() {
        let img = GrayImage::constant(97, 64, 0.37).unwrap();
        let out = clahe_gray(&img, &ClaheParams::default()).unwrap();
        let first = out.get(0, 0);
        assert!(out.data().iter().all(|&v| (v - first).abs() < 1e-12));
    }

    #[test]
    fn widens_low_contrast_ramp() {
        let img = GrayImage::from_fn(200, 160, |x, y| 0.45 + 0.1 * (x + y) as f64 / 358.0).unwrap();
        let out = clahe_gray(&img, &ClaheParams::default()).unwrap();
        assert!(out.std_dev() > img.std_dev(), "{} vs {}", out.std_dev(), img.std_dev());
    }

    #[test]
    fn range_and_size_preserved_on_random_images() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let w = rng.random_range(1..60);
            let h = rng.random_range(1..60);
            let lo: f64 = rng.random_range(0.0..0.5);
            let span: f64 = rng.random_range(0.0..0.5);
            let img = GrayImage::from_fn(w, h, |_, _| lo + span * rng.random::<f64>()).unwrap();
            let out = clahe_gray(&img, &ClaheParams::default()).unwrap();
            assert_eq!((out.width(), out.height()), (w, h));
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            if w * h > 1 && span > 0.0 {
                let mad: f64 = img
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
                assert!(mad > 0.0);
            }
        }
    }

    #[test]
    fn blend_weights_at_and_between_centers() {
        let c = [1.5, 5.5, 9.5];
        assert_eq!(blend(0.0, &c), (0, 0, 0.0));
        assert_eq!(blend(1.5, &c), (0, 0, 0.0));
        assert_eq!(blend(5.5, &c), (1, 2, 0.0));
        assert_eq!(blend(3.5, &c), (0, 1, 0.5));
        assert_eq!(blend(10.0, &c), (2, 2, 0.0));
    }

    #[test]
    fn bad_params_rejected() {
        let img = GrayImage::constant(8, 8, 0.5).unwrap();
        let p = ClaheParams {
            clip_factor: 0.5,
            ..ClaheParams::default()
        };
        assert!(clahe_gray(&img, &p).is_err());
    }
}
