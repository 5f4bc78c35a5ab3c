use std::f64::consts::PI;

use hfe_core::data::ImageBuffer;
use hfe_core::highpass::{
    fft2, high_pass_filter, high_pass_plane, high_pass_tensor, ifft2, train_phi, HighPassSpec, PhiConfig,
    PhiTrainConfig,
};
use hfe_core::rng::rng_for;
use hfe_core::Tensor;
use rand::Rng as _;

use crate::fixtures::{max_abs_diff, rectangles};
use crate::Verdict;

const ROUND_TRIP_TOL: f64 = 1e-5;
const PARSEVAL_TOL: f64 = 1e-4;
/// Agreement with the direct transform, relative to the largest coefficient.
const DFT_TOL: f64 = 1e-10;

/// `X[u,v] = sum_{y,x} p[y,x] exp(-2πi(uy/H + vx/W))`, term by term.
fn direct_dft(p: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let t = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    re += p[y * w + x] * t.cos();
                    im += p[y * w + x] * t.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

pub fn a2() -> Verdict {
    let mut rng = rng_for(7, 2);
    let mut sizes = vec![(1, 1), (1, 7), (4, 4), (8, 8), (17, 23), (23, 17), (16, 9), (12, 30), (31, 5), (32, 32)];
    for _ in 0..6 {
        sizes.push((rng.random_range(1..=40), rng.random_range(1..=40)));
    }
    let (mut dft_err, mut rt_err, mut parseval_err) = (0.0f64, 0.0f64, 0.0f64);
    for &(h, w) in &sizes {
        let p: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = fft2(&p, h, w);
        let oracle = direct_dft(&p, h, w);
        let scale = oracle.iter().map(|(r, i)| r.hypot(*i)).fold(1.0, f64::max);
        for (z, (r, i)) in spec.data.iter().zip(&oracle) {
            dft_err = dft_err.max((z.re - r).hypot(z.im - i) / scale);
        }
        let back = ifft2(&spec);
        for (z, x) in back.iter().zip(&p) {
            rt_err = rt_err.max((z.re - x).abs()).max(z.im.abs());
        }
        let energy: f64 = p.iter().map(|x| x * x).sum();
        let spectral: f64 = spec.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / (h * w) as f64;
        parseval_err = parseval_err.max((energy - spectral).abs() / energy);
    }
    Verdict::new(
        dft_err <= DFT_TOL && rt_err <= ROUND_TRIP_TOL && parseval_err <= PARSEVAL_TOL,
        format!(
            "{} sizes incl. 17x23; vs direct DFT rel {dft_err:.2e} (tol {DFT_TOL:.0e}), round trip {rt_err:.2e} \
             (tol {ROUND_TRIP_TOL:.0e}), Parseval rel {parseval_err:.2e} (tol {PARSEVAL_TOL:.0e})",
            sizes.len()
        ),
    )
}

const CONSTANT_TOL: f64 = 1e-6;
const SINUSOID_TOL: f64 = 1e-4;
const IDEMPOTENCE_TOL: f64 = 1e-6;

fn wave(h: usize, w: usize, u: usize, v: usize) -> Vec<f64> {
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            (2.0 * PI * (u as f64 * y / h as f64 + v as f64 * x / w as f64) + 0.3).cos()
        })
        .collect()
}

pub fn a3() -> Verdict {
    let spec = HighPassSpec::default();
    let mut notes = Vec::new();
    let mut pass = true;

    // constants
    let flat = ImageBuffer::filled(32, 32, 3, 0.6).unwrap();
    let mut constant = high_pass_filter(&flat, &spec).data().iter().fold(0.0f32, |m, v| m.max(v.abs())) as f64;
    constant = constant.max(max_abs_diff(&high_pass_plane(&vec![0.37; 17 * 23], 17, 23, &spec), &vec![0.0; 17 * 23]));
    pass &= constant <= CONSTANT_TOL;
    notes.push(format!("constant max {constant:.2e} (tol {CONSTANT_TOL:.0e})"));

    // sinusoids at bins that pass the filter, including their conjugates
    let mut sine = 0.0f64;
    for (h, w, u, v) in [(32, 32, 12, 5), (24, 40, 9, 17), (17, 23, 6, 8)] {
        assert!(spec.passes(u, v, h, w) && spec.passes(h - u, w - v, h, w), "{h}x{w} bin ({u},{v}) is below the cutoff");
        let p = wave(h, w, u, v);
        sine = sine.max(max_abs_diff(&high_pass_plane(&p, h, w, &spec), &p));
        let img = ImageBuffer::from_fn(h, w, 1, |y, x, _| (0.5 + 0.4 * p[y * w + x]) as f32).unwrap();
        let out = high_pass_filter(&img, &spec);
        let expect: Vec<f64> = img.pixels().iter().map(|&v| v as f64 - 0.5).collect();
        let got: Vec<f64> = out.data().iter().map(|&v| v as f64).collect();
        sine = sine.max(max_abs_diff(&got, &expect));
    }
    pass &= sine <= SINUSOID_TOL;
    notes.push(format!("passing sinusoids max err {sine:.2e} (tol {SINUSOID_TOL:.0e})"));

    // idempotence on noise, in f64 planes and through f32 tensors
    let mut rng = rng_for(3, 3);
    let p: Vec<f64> = (0..48 * 40).map(|_| rng.random_range(0.0..1.0)).collect();
    let once = high_pass_plane(&p, 48, 40, &spec);
    let mut idem = max_abs_diff(&high_pass_plane(&once, 48, 40, &spec), &once);
    let t = Tensor::from_fn((2, 3, 20, 28), |_| rng.random_range(0.0..1.0f32));
    let t1 = high_pass_tensor(&t, &spec);
    let t2 = high_pass_tensor(&t1, &spec);
    idem = idem.max(t1.data().iter().zip(t2.data()).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max));
    pass &= idem <= IDEMPOTENCE_TOL;
    notes.push(format!("idempotence max {idem:.2e} (tol {IDEMPOTENCE_TOL:.0e})"));

    Verdict::new(pass, notes.join(", "))
}

const PHI_STEPS: u64 = 2000;
const PHI_MIN_RATIO: f64 = 10.0;

pub fn a4() -> Verdict {
    let images: Vec<ImageBuffer> = (0..16).map(rectangles).collect();
    let cfg = PhiTrainConfig {
        steps: PHI_STEPS,
        ..PhiTrainConfig::default()
    };
    let (phi, report) = train_phi(&images, PhiConfig::default(), &cfg).expect("phi training");
    let ratio = report.initial_mse / report.final_mse;
    Verdict::new(
        ratio >= PHI_MIN_RATIO && phi.is_frozen(),
        format!(
            "16 images 64x64, {PHI_STEPS} steps: oracle MSE {:.3e} -> {:.3e}, ratio {ratio:.1} (need >= {PHI_MIN_RATIO})",
            report.initial_mse, report.final_mse
        ),
    )
}
