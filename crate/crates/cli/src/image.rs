//! Grayscale images as row-major f64 pixels in [0, 1], plus the synthetic
//! test pattern and noise used by the denoising benchmark.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image, clamping pixel values into [0, 1]. Non-finite pixels
    /// are rejected.
    pub fn new(width: usize, height: usize, mut pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::Config(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        for p in &mut pixels {
            if !p.is_finite() {
                return Err(Error::Config(format!("non-finite pixel value {p}")));
            }
            *p = p.clamp(0.0, 1.0);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Mean absolute pixel difference against another image of the same size.
    pub fn mean_abs_diff(&self, other: &GrayImage) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Config(format!(
                "image size mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let total: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(total / self.pixels.len() as f64)
    }
}

/// Piecewise-constant blocks over a soft gradient: enough structure for a
/// denoiser to show edge preservation and smoothing at the same time.
pub fn synthetic_image(width: usize, height: usize) -> GrayImage {
    let mut pixels = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let gradient = 0.25 + 0.4 * (y as f64 / height.max(2) as f64);
            let mut v = gradient;
            let (fx, fy) = (x as f64 / width as f64, y as f64 / height as f64);
            if (0.12..0.42).contains(&fx) && (0.14..0.46).contains(&fy) {
                v = 0.1;
            }
            if (0.55..0.9).contains(&fx) && (0.5..0.85).contains(&fy) {
                v = 0.9;
            }
            if (0.2..0.8).contains(&fx) && (0.62..0.72).contains(&fy) && v < 0.85 {
                v = 0.65;
            }
            pixels[y * width + x] = v;
        }
    }
    GrayImage::new(width, height, pixels).expect("synthetic pattern is valid")
}

/// Adds i.i.d. Gaussian noise and clamps back into [0, 1].
pub fn add_gaussian_noise(image: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = image
        .pixels()
        .iter()
        .map(|p| p + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    GrayImage::new(image.width(), image.height(), pixels).expect("noise keeps pixels finite")
}
