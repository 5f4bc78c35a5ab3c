//! Plane-level filtering helpers shared by degradation, masking and metrics.

/// Mirror index without repeating the edge sample (`-1 -> 1`, `n -> n - 2`).
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Cross-correlates an `h x w` plane with an odd `k x k` kernel, reflecting at the border.
pub fn correlate_reflect(plane: &[f32], h: usize, w: usize, kernel: &[f32], k: usize) -> Vec<f32> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for ky in 0..k {
                let sy = reflect(y as isize + ky as isize - r, h);
                for kx in 0..k {
                    let sx = reflect(x as isize + kx as isize - r, w);
                    acc += kernel[ky * k + kx] as f64 * plane[sy * w + sx] as f64;
                }
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

/// Normalized 1-D Gaussian taps of length `2 * radius + 1`.
pub fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur (radius `ceil(3 sigma)`) with reflective borders.
pub fn gaussian_blur_reflect(plane: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let taps = gaussian_taps(sigma, radius);
    let r = radius as isize;
    let mut tmp = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * plane[y * w + reflect(x as isize + i as isize - r, w)] as f64)
                .sum();
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * tmp[reflect(y as isize + i as isize - r, h) * w + x])
                .sum::<f64>() as f32;
        }
    }
    out
}

/// ITU-R BT.601 luma of an interleaved RGB buffer; single-channel input is copied.
pub fn luma(pixels: &[f32], channels: usize) -> Vec<f32> {
    match channels {
        1 => pixels.to_vec(),
        _ => pixels
            .chunks(channels)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect(),
    }
}
