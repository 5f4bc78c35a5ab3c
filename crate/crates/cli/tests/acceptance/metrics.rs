use hfe_core::data::{add_awgn, ImageBuffer};
use hfe_core::metrics::{psnr, ssim};
use hfe_core::rng::rng_for;

use crate::fixtures::{luma_at, noise_image, textured};
use crate::Verdict;

const UNIFORM_DB: f64 = 28.1308;
const UNIFORM_TOL: f64 = 1e-3;
const PSNR_TOL: f64 = 1e-6;
const SSIM_TOL: f64 = 1e-5;

fn psnr_oracle(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let n = a.pixels().len() as f64;
    let mse = a.pixels().iter().zip(b.pixels()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / n;
    10.0 * (1.0 / mse).log10()
}

/// Mean over every fully covered 11x11 window of the luma, with the
/// window statistics taken directly from their definitions.
fn ssim_oracle(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let z: f64 = g.iter().sum::<f64>().powi(2);
    let (h, w) = (a.height(), a.width());
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..=h - 11 {
        for j in 0..=w - 11 {
            let window = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
                let mut s = 0.0;
                for u in 0..11 {
                    for v in 0..11 {
                        s += g[u] * g[v] / z * f(i + u, j + v);
                    }
                }
                s
            };
            let ma = window(&|y, x| luma_at(a, y, x));
            let mb = window(&|y, x| luma_at(b, y, x));
            let va = window(&|y, x| (luma_at(a, y, x) - ma).powi(2));
            let vb = window(&|y, x| (luma_at(b, y, x) - mb).powi(2));
            let cov = window(&|y, x| (luma_at(a, y, x) - ma) * (luma_at(b, y, x) - mb));
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

pub fn a9() -> Verdict {
    let base = ImageBuffer::filled(32, 32, 3, 0.5).unwrap();
    let shifted = ImageBuffer::filled(32, 32, 3, 0.5 + 10.0 / 255.0).unwrap();
    let uniform = psnr(&base, &shifted).unwrap();

    let mut rng = rng_for(9, 9);
    let (mut psnr_err, mut ssim_err, mut self_ssim) = (0.0f64, 0.0f64, 1.0f64);
    for k in 0..6u64 {
        let clean = if k % 2 == 0 { textured(k, 24 + 4 * k as usize) } else { noise_image(17, 29, 3, &mut rng) };
        let noisy = add_awgn(&clean, 5.0 + 10.0 * k as f64, k);
        let gray = ImageBuffer::from_fn(20, 14, 1, |y, x, _| clean.get(y % clean.height(), x % clean.width(), 0)).unwrap();
        let gray_noisy = add_awgn(&gray, 20.0, k);
        for (a, b) in [(&clean, &noisy), (&gray, &gray_noisy)] {
            psnr_err = psnr_err.max((psnr(a, b).unwrap() - psnr_oracle(a, b)).abs());
            ssim_err = ssim_err.max((ssim(a, b).unwrap() - ssim_oracle(a, b)).abs());
            let s = ssim(a, a).unwrap();
            if s != 1.0 {
                self_ssim = s;
            }
        }
    }
    Verdict::new(
        (uniform - UNIFORM_DB).abs() <= UNIFORM_TOL && self_ssim == 1.0 && psnr_err <= PSNR_TOL && ssim_err <= SSIM_TOL,
        format!(
            "uniform 10/255 offset {uniform:.4} dB (want {UNIFORM_DB} +- {UNIFORM_TOL:.0e}), SSIM(a,a) {self_ssim}, \
             PSNR vs oracle {psnr_err:.2e} dB (tol {PSNR_TOL:.0e}), SSIM vs oracle {ssim_err:.2e} (tol {SSIM_TOL:.0e})"
        ),
    )
}
