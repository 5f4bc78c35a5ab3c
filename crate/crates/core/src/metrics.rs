//! PSNR and SSIM, plus the per-image CSV report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ImageBuffer;
use crate::error::{Error, Result};
use crate::filter::{gaussian_taps, luma};

/// Reported when the images are identical.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Which pixel values PSNR averages over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsnrSpace {
    #[default]
    Rgb,
    Luma,
}

fn check_pair(op: &'static str, a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::contract(
            op,
            format!(
                "images differ: {}x{}x{} vs {}x{}x{}",
                a.height(),
                a.width(),
                a.channels(),
                b.height(),
                b.width(),
                b.channels()
            ),
        ))
    }
}

/// PSNR of a mean squared error on `[0, 1]` values, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// `10 log10(1 / MSE)` over all channels of `[0, 1]` images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    psnr_in(a, b, PsnrSpace::Rgb)
}

pub fn psnr_in(a: &ImageBuffer, b: &ImageBuffer, space: PsnrSpace) -> Result<f64> {
    check_pair("psnr", a, b)?;
    let se = |x: &[f32], y: &[f32]| -> f64 {
        let total: f64 = x.iter().zip(y).map(|(&p, &q)| (p as f64 - q as f64).powi(2)).sum();
        total / x.len().max(1) as f64
    };
    let mse = match space {
        PsnrSpace::Rgb => se(a.pixels(), b.pixels()),
        PsnrSpace::Luma => se(&luma(a.pixels(), a.channels()), &luma(b.pixels(), b.channels())),
    };
    Ok(psnr_from_mse(mse))
}

/// Mean SSIM of the luma planes over every fully covered 11x11 window.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_pair("ssim", a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::contract(
            "ssim",
            format!("image is {h}x{w}, both sides must be at least {SSIM_WINDOW}"),
        ));
    }
    let pa: Vec<f64> = luma(a.pixels(), a.channels()).into_iter().map(f64::from).collect();
    let pb: Vec<f64> = luma(b.pixels(), b.channels()).into_iter().map(f64::from).collect();
    Ok(ssim_planes(&pa, &pb, h, w))
}

/// SSIM of two planes with values in `[0, 1]`.
pub fn ssim_planes(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let taps = gaussian_taps(SSIM_SIGMA, SSIM_WINDOW / 2);
    let filter = |x: &[f64]| valid_filter(x, h, w, &taps);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (mu_a, mu_b) = (filter(a), filter(b));
    let (e_aa, e_bb, e_ab) = (filter(&aa), filter(&bb), filter(&ab));
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        // the same expression yields variances and covariance
        let (va, vb, cov) = (e_aa[i] - ma * ma, e_bb[i] - mb * mb, e_ab[i] - ma * mb);
        let num = (ma * mb + ma * mb + c1) * (cov + cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    total / n as f64
}

/// Separable correlation keeping only fully covered positions.
fn valid_filter(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for j in 0..ow {
            rows[y * ow + j] = taps.iter().enumerate().map(|(t, c)| c * x[y * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = taps.iter().enumerate().map(|(t, c)| c * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub path: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, path: impl Into<String>, a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
        self.rows.push(MetricRow {
            path: path.into(),
            psnr: psnr(a, b)?,
            ssim: ssim(a, b)?,
        });
        Ok(())
    }

    /// Mean PSNR and SSIM, or `None` for an empty report.
    pub fn mean(&self) -> Option<(f64, f64)> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.len() as f64;
        Some((
            self.rows.iter().map(|r| r.psnr).sum::<f64>() / n,
            self.rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        ))
    }

    /// `path,psnr,ssim` rows followed by a `mean` row, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,psnr,ssim\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.6},{:.6}", r.path, r.psnr, r.ssim);
        }
        if let Some((p, s)) = self.mean() {
            let _ = writeln!(out, "mean,{p:.6},{s:.6}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
