use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::ImageBuffer;
use crate::error::{Error, Result};
use crate::filter::correlate_reflect;
use crate::rng::{rng_for, Rng};

/// Adds i.i.d. Gaussian noise with standard deviation `sigma_255 / 255`, then clips.
pub fn add_awgn(img: &ImageBuffer, sigma_255: f64, seed: u64) -> ImageBuffer {
    if sigma_255 <= 0.0 {
        return img.clone();
    }
    let mut rng = rng_for(seed, 0);
    let normal = Normal::new(0.0, sigma_255 / 255.0).expect("positive sigma");
    let noisy = img
        .pixels()
        .iter()
        .map(|&v| (v as f64 + normal.sample(&mut rng)) as f32)
        .collect();
    ImageBuffer::from_unclipped(img.height(), img.width(), img.channels(), noisy).expect("same geometry")
}

/// Normalized, possibly rotated anisotropic Gaussian on a `size x size` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    size: usize,
    sigma_x: f64,
    sigma_y: f64,
    angle: f64,
    weights: Vec<f32>,
}

impl BlurKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn params(&self) -> (f64, f64, f64) {
        (self.sigma_x, self.sigma_y, self.angle)
    }

    /// Row-major weights; row index is the vertical offset.
    pub fn weights(&self) -> &[f32] {
        &self.weights
    }
}

/// Samples `exp(-(u²/σx² + v²/σy²)/2)` at integer offsets, where `(u, v)` is
/// the offset rotated by `-angle`, and normalizes to unit sum.
pub fn gaussian_kernel(size: usize, sigma_x: f64, sigma_y: f64, angle: f64) -> Result<BlurKernel> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(Error::contract("gaussian_kernel", format!("size {size} must be odd and at least 3")));
    }
    if !(sigma_x > 0.0 && sigma_y > 0.0) {
        return Err(Error::contract("gaussian_kernel", "sigmas must be positive"));
    }
    let r = (size / 2) as f64;
    let (sin, cos) = angle.sin_cos();
    let mut raw = Vec::with_capacity(size * size);
    for row in 0..size {
        let dy = row as f64 - r;
        for col in 0..size {
            let dx = col as f64 - r;
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            raw.push((-0.5 * (u * u / (sigma_x * sigma_x) + v * v / (sigma_y * sigma_y))).exp());
        }
    }
    let total: f64 = raw.iter().sum();
    Ok(BlurKernel {
        size,
        sigma_x,
        sigma_y,
        angle,
        weights: raw.into_iter().map(|w| (w / total) as f32).collect(),
    })
}

/// Per-channel 2-D blur with reflective borders.
pub fn blur(img: &ImageBuffer, kernel: &BlurKernel) -> ImageBuffer {
    let (h, w) = (img.height(), img.width());
    let planes: Vec<Vec<f32>> = (0..img.channels())
        .map(|c| correlate_reflect(&img.plane(c), h, w, &kernel.weights, kernel.size))
        .collect();
    ImageBuffer::from_planes(h, w, &planes).expect("same geometry")
}

/// Random blur kernels for training-data synthesis.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelPool {
    pub sizes: Vec<usize>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for KernelPool {
    fn default() -> Self {
        KernelPool {
            sizes: vec![7, 9, 11, 13],
            sigma_min: 0.6,
            sigma_max: 3.0,
        }
    }
}

impl KernelPool {
    /// Uniform size, per-axis sigmas and angle in `[0, pi)`.
    pub fn sample(&self, rng: &mut Rng) -> BlurKernel {
        let size = self.sizes[rng.random_range(0..self.sizes.len())];
        let hi = self.sigma_max.max(self.sigma_min);
        let mut sigma = || {
            if hi > self.sigma_min {
                rng.random_range(self.sigma_min..hi)
            } else {
                hi
            }
        };
        let (sx, sy) = (sigma(), sigma());
        let angle = rng.random_range(0.0..PI);
        gaussian_kernel(size, sx, sy, angle).expect("pool parameters are valid")
    }
}
