//! 2-D FFT over single planes and the ideal high-pass filter.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::ImageBuffer;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Unshifted 2-D spectrum: DC sits at `(0, 0)`, row-major `height x width`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn at(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.width + v]
    }
}

/// Forward transform `X[u,v] = sum x[y,x] e^{-2πi(uy/H + vx/W)}` (no scaling).
pub fn fft2(plane: &[f64], height: usize, width: usize) -> Spectrum {
    assert_eq!(plane.len(), height * width, "plane length disagrees with its size");
    let mut data: Vec<Complex64> = plane.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform(&mut data, height, width, false);
    Spectrum { height, width, data }
}

/// Inverse transform, scaled by `1/(HW)` so `ifft2(fft2(x)) == x`.
pub fn ifft2(spec: &Spectrum) -> Vec<Complex64> {
    let mut data = spec.data.clone();
    transform(&mut data, spec.height, spec.width, true);
    let scale = 1.0 / (spec.height * spec.width) as f64;
    data.iter_mut().for_each(|z| *z *= scale);
    data
}

fn transform(data: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    if height == 0 || width == 0 {
        return;
    }
    let mut planner = FftPlanner::new();
    let (rows, cols) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    rows.process(data);
    let mut column = vec![Complex64::default(); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        cols.process(&mut column);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
}

/// Cutoff of the ideal high-pass filter as a fraction of the Nyquist radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighPassSpec {
    pub cutoff: f64,
}

impl Default for HighPassSpec {
    fn default() -> Self {
        HighPassSpec { cutoff: 0.25 }
    }
}

impl HighPassSpec {
    pub fn new(cutoff: f64) -> Result<Self> {
        let spec = HighPassSpec { cutoff };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoff > 0.0 && self.cutoff < 1.0 {
            Ok(())
        } else {
            Err(Error::contract(
                "high_pass",
                format!("cutoff {} must lie strictly between 0 and 1", self.cutoff),
            ))
        }
    }

    /// Whether bin `(u, v)` survives. Radius is measured on the centered
    /// spectrum in cycles per pixel, where Nyquist is 0.5.
    pub fn passes(&self, u: usize, v: usize, height: usize, width: usize) -> bool {
        let fu = u.min(height - u) as f64 / height as f64;
        let fv = v.min(width - v) as f64 / width as f64;
        (fu * fu + fv * fv).sqrt() >= self.cutoff * 0.5
    }
}

/// High-pass filters one plane; the result is real and unclipped.
pub fn high_pass_plane(plane: &[f64], height: usize, width: usize, spec: &HighPassSpec) -> Vec<f64> {
    let mut s = fft2(plane, height, width);
    for u in 0..height {
        for v in 0..width {
            if !spec.passes(u, v, height, width) {
                s.data[u * width + v] = Complex64::default();
            }
        }
    }
    ifft2(&s).into_iter().map(|z| z.re).collect()
}

/// Filters every plane of an `(N, C, H, W)` tensor.
pub fn high_pass_tensor(x: &Tensor, spec: &HighPassSpec) -> Tensor {
    let s = x.shape();
    let mut out = Vec::with_capacity(x.numel());
    for plane in x.data().chunks(s.plane().max(1)) {
        let p: Vec<f64> = plane.iter().map(|&v| v as f64).collect();
        out.extend(high_pass_plane(&p, s.h, s.w, spec).into_iter().map(|v| v as f32));
    }
    Tensor::new(s, out).expect("shape preserved")
}

/// Filters an image, returned as a `(1, C, H, W)` signal that may be negative.
pub fn high_pass_filter(img: &ImageBuffer, spec: &HighPassSpec) -> Tensor {
    high_pass_tensor(&img.to_tensor(), spec)
}
