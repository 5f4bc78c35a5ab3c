use hfe_core::data::ImageBuffer;
use hfe_core::rng::{rng_for, Rng};
use hfe_core::{Shape, Tensor};
use rand::Rng as _;

/// Values with magnitude in `[0.1, 1)` and random sign, clear of ReLU and L1 kinks.
pub fn signed(shape: impl Into<Shape>, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

pub fn uniform(shape: impl Into<Shape>, lo: f64, hi: f64, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

pub fn noise_image(h: usize, w: usize, c: usize, rng: &mut Rng) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, c, |_, _, _| rng.random_range(0.0..1.0)).unwrap()
}

/// Flat background with six random rectangles, 64x64 RGB.
pub fn rectangles(seed: u64) -> ImageBuffer {
    let mut rng = rng_for(seed, 0);
    let n = 64;
    let mut planes: Vec<Vec<f32>> = (0..3).map(|_| vec![rng.random_range(0.2..0.8); n * n]).collect();
    for _ in 0..6 {
        let (y0, x0) = (rng.random_range(0..56), rng.random_range(0..56));
        let (h, w) = (rng.random_range(4..32), rng.random_range(4..32));
        let v: [f32; 3] = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        for y in y0..(y0 + h).min(n) {
            for x in x0..(x0 + w).min(n) {
                for c in 0..3 {
                    planes[c][y * n + x] = v[c];
                }
            }
        }
    }
    ImageBuffer::from_planes(n, n, &planes).unwrap()
}

/// Smooth sinusoidal texture with an inverted square, RGB.
pub fn textured(seed: u64, size: usize) -> ImageBuffer {
    let mut r = rng_for(1000 + seed, 0);
    let (fx, fy, ph): (f32, f32, f32) = (r.random_range(0.05..0.2), r.random_range(0.05..0.2), r.random_range(0.0..6.0));
    let base: [f32; 3] = [r.random_range(0.2..0.8), r.random_range(0.2..0.8), r.random_range(0.2..0.8)];
    let side = size / 3;
    let (y0, x0) = (r.random_range(side / 4..size / 2), r.random_range(side / 4..size / 2));
    ImageBuffer::from_fn(size, size, 3, |y, x, c| {
        let mut v = base[c] + 0.2 * ((x as f32 * fx + ph).sin() * (y as f32 * fy).cos());
        if (y0..y0 + side).contains(&y) && (x0..x0 + side).contains(&x) {
            v = 1.0 - v;
        }
        v.clamp(0.0, 1.0)
    })
    .unwrap()
}

/// ITU-R BT.601 luma of one pixel, evaluated in `f32` like the stored images.
pub fn luma_at(img: &ImageBuffer, y: usize, x: usize) -> f64 {
    if img.channels() == 1 {
        return img.get(y, x, 0) as f64;
    }
    (0.299f32 * img.get(y, x, 0) + 0.587f32 * img.get(y, x, 1) + 0.114f32 * img.get(y, x, 2)) as f64
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
