use std::path::Path;

use image::RgbImage;

use super::GrayImage;
use crate::error::{Error, Result};

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Rec.601 luminance of an 8-bit RGB image, scaled to `[0, 1]`.
pub fn to_gray(rgb: &RgbImage) -> Result<GrayImage> {
    let (w, h) = rgb.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::data("zero-sized image"));
    }
    let data = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            let y = (LUMA_R * r as f64 + LUMA_G * g as f64 + LUMA_B * b as f64) / 255.0;
            y.clamp(0.0, 1.0)
        })
        .collect();
    GrayImage::new(w as usize, h as usize, data)
}

/// Decodes an image file (PNG, PPM/PGM, ...) and converts it to gray.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::parse(path, format!("cannot decode image: {e}")))?;
    to_gray(&img.to_rgb8()).map_err(|e| Error::parse(path, e.to_string()))
}

/// Writes an 8-bit grayscale PNG.
pub fn save_png(img: &GrayImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .ok_or_else(|| Error::data("image buffer size mismatch"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::parse(path, format!("cannot write PNG: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn white_and_red() {
        let mut img = RgbImage::new(2, 1);
        img.put_pixel(0, 0, Rgb([255, 255, 255]));
        img.put_pixel(1, 0, Rgb([255, 0, 0]));
        let g = to_gray(&img).unwrap();
        assert!((g.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((g.get(1, 0) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn random_matches_weighted_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut img = RgbImage::new(4, 4);
        for p in img.pixels_mut() {
            *p = Rgb([rng.random(), rng.random(), rng.random()]);
        }
        let g = to_gray(&img).unwrap();
        for (x, y, p) in img.enumerate_pixels() {
            let expect = (p.0[0] as f64 * 0.299 + p.0[1] as f64 * 0.587 + p.0[2] as f64 * 0.114) / 255.0;
            assert!((g.get(x as usize, y as usize) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sized_rejected() {
        assert!(to_gray(&RgbImage::new(0, 3)).is_err());
    }

    #[test]
    fn png_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = GrayImage::from_fn(5, 3, |x, y| (x + 5 * y) as f64 / 14.0).unwrap();
        save_png(&img, &p).unwrap();
        let back = load_gray(&p).unwrap();
        assert_eq!((back.width(), back.height()), (5, 3));
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-9);
        }
    }

    #[test]
    fn corrupt_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.png");
        std::fs::write(&p, b"not an image").unwrap();
        let err = load_gray(&p).unwrap_err();
        assert!(err.to_string().contains("broken.png"));
    }
}
