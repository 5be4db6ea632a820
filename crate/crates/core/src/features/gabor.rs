use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_frame, BlockGrid, ExtractorKind, Template};
use crate::dataset::SampleKey;
use crate::error::{Error, Result};
use crate::preproc::GrayImage;

/// Gabor filter bank layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaborParams {
    pub min_wavelength: f64,
    pub max_wavelength: f64,
    pub n_wavelengths: usize,
    pub n_orientations: usize,
    /// Half-magnitude frequency bandwidth in octaves.
    pub bandwidth_octaves: f64,
}

impl Default for GaborParams {
    fn default() -> Self {
        GaborParams {
            min_wavelength: 8.0,
            max_wavelength: 64.0,
            n_wavelengths: 5,
            n_orientations: 6,
            bandwidth_octaves: 1.0,
        }
    }
}

impl GaborParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_wavelength >= 2.0 && self.max_wavelength >= self.min_wavelength) {
            return Err(Error::config("gabor wavelengths must satisfy 2 <= min <= max"));
        }
        if self.max_wavelength > 256.0 {
            return Err(Error::config("gabor max_wavelength above 256 px"));
        }
        if self.n_wavelengths == 0 || self.n_orientations == 0 {
            return Err(Error::config("gabor bank needs at least one wavelength and orientation"));
        }
        if self.n_wavelengths == 1 && self.min_wavelength != self.max_wavelength {
            return Err(Error::config("a single gabor wavelength needs min == max"));
        }
        if !(self.bandwidth_octaves > 0.0 && self.bandwidth_octaves <= 4.0) {
            return Err(Error::config("gabor bandwidth_octaves outside (0, 4]"));
        }
        Ok(())
    }

    /// Wavelengths in geometric progression from min to max.
    pub fn wavelengths(&self) -> Vec<f64> {
        if self.n_wavelengths == 1 {
            return vec![self.min_wavelength];
        }
        let ratio = self.max_wavelength / self.min_wavelength;
        (0..self.n_wavelengths)
            .map(|k| self.min_wavelength * ratio.powf(k as f64 / (self.n_wavelengths - 1) as f64))
            .collect()
    }

    /// Orientations of the carrier wave vector, evenly spaced over 180°.
    pub fn orientations(&self) -> Vec<f64> {
        (0..self.n_orientations)
            .map(|k| k as f64 * PI / self.n_orientations as f64)
            .collect()
    }

    pub fn channels(&self) -> usize {
        self.n_wavelengths * self.n_orientations
    }

    /// Gaussian envelope width for a given wavelength and octave bandwidth.
    pub fn sigma(&self, wavelength: f64) -> f64 {
        let b = 2f64.powf(self.bandwidth_octaves);
        wavelength / PI * (2f64.ln() / 2.0).sqrt() * (b + 1.0) / (b - 1.0)
    }
}

/// One zero-mean complex kernel sampled on a square window.
#[derive(Clone, Debug)]
struct Kernel {
    radius: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Precomputed filter bank, ordered wavelength-major then orientation.
#[derive(Clone, Debug)]
pub struct GaborBank {
    params: GaborParams,
    kernels: Vec<Kernel>,
    max_radius: usize,
}

impl GaborBank {
    pub fn new(params: GaborParams) -> Result<Self> {
        params.validate()?;
        let mut kernels = Vec::with_capacity(params.channels());
        for lambda in params.wavelengths() {
            let sigma = params.sigma(lambda);
            let radius = (3.0 * sigma).ceil() as usize;
            for theta in params.orientations() {
                kernels.push(Kernel::build(lambda, theta, sigma, radius));
            }
        }
        let max_radius = kernels.iter().map(|k| k.radius).max().unwrap_or(0);
        Ok(GaborBank {
            params,
            kernels,
            max_radius,
        })
    }

    pub fn params(&self) -> &GaborParams {
        &self.params
    }

    pub fn channels(&self) -> usize {
        self.kernels.len()
    }

    /// Response magnitudes of every channel at pixel `(cx, cy)`.
    pub fn magnitudes_at(&self, img: &GrayImage, cx: usize, cy: usize) -> Vec<f64> {
        let r = self.max_radius as isize;
        let side = 2 * self.max_radius + 1;
        let mut patch = Vec::with_capacity(side * side);
        for dy in -r..=r {
            for dx in -r..=r {
                patch.push(img.get_clamped(cx as isize + dx, cy as isize + dy));
            }
        }
        self.kernels
            .iter()
            .map(|k| {
                let off = self.max_radius - k.radius;
                let kside = 2 * k.radius + 1;
                let (mut re, mut im) = (0.0, 0.0);
                for ky in 0..kside {
                    let row = &patch[(ky + off) * side + off..(ky + off) * side + off + kside];
                    let kre = &k.re[ky * kside..(ky + 1) * kside];
                    let kim = &k.im[ky * kside..(ky + 1) * kside];
                    for i in 0..kside {
                        re += row[i] * kre[i];
                        im += row[i] * kim[i];
                    }
                }
                re.hypot(im)
            })
            .collect()
    }
}

impl Kernel {
    fn build(lambda: f64, theta: f64, sigma: f64, radius: usize) -> Kernel {
        let side = 2 * radius + 1;
        let r = radius as f64;
        let omega = 2.0 * PI / lambda;
        let (c, s) = (theta.cos(), theta.sin());
        let mut env = Vec::with_capacity(side * side);
        let mut phase = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                let (dx, dy) = (x as f64 - r, y as f64 - r);
                env.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
                phase.push(omega * (dx * c + dy * s));
            }
        }
        let env_sum: f64 = env.iter().sum();
        // DC offset removed so the kernel sums to zero on its own window
        let dc_re = env.iter().zip(&phase).map(|(e, p)| e * p.cos()).sum::<f64>() / env_sum;
        let dc_im = env.iter().zip(&phase).map(|(e, p)| e * p.sin()).sum::<f64>() / env_sum;
        let re = env
            .iter()
            .zip(&phase)
            .map(|(e, p)| e * (p.cos() - dc_re) / env_sum)
            .collect();
        let im = env
            .iter()
            .zip(&phase)
            .map(|(e, p)| e * (p.sin() - dc_im) / env_sum)
            .collect();
        Kernel { radius, re, im }
    }
}

/// Samples the bank at each retained block center; no full-image filtering.
pub fn extract_gabor(img: &GrayImage, grid: &BlockGrid, bank: &GaborBank, sample_key: SampleKey) -> Result<Template> {
    check_frame(img, grid)?;
    let mut vector = Vec::with_capacity(grid.retained().len() * bank.channels());
    for &block in grid.retained() {
        let (cx, cy) = grid.block_center(block);
        vector.extend(bank.magnitudes_at(img, cx, cy));
    }
    Ok(Template::assemble(
        ExtractorKind::Gabor,
        sample_key,
        grid,
        bank.channels(),
        vector,
    ))
}
