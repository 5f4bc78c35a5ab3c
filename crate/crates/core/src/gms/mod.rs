//! Gradient magnitude similarity maps and the hard and soft training masks
//! derived from them.

mod morphology;

pub use morphology::{dilate, erode, open, BinaryMask, StructuringElement};

use serde::{Deserialize, Serialize};

use crate::data::ImageBuffer;
use crate::error::{Error, Result};
use crate::filter::{gaussian_blur_reflect, luma, reflect};

/// Stability constant on the 0..255 gradient scale.
pub const DEFAULT_C: f64 = 170.0;

/// A float map over `height x width` pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl ScoreMap {
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Grayscale image of the map clamped to `[0, 1]`.
    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::from_unclipped(self.height, self.width, 1, self.values.clone()).expect("sizes agree")
    }
}

impl BinaryMask {
    pub fn to_image(&self) -> ImageBuffer {
        let px = self.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ImageBuffer::new(self.height(), self.width(), 1, px).expect("sizes agree")
    }
}

/// `sqrt(gx^2 + gy^2)` with Prewitt kernels scaled by 1/3 and reflective borders.
pub fn gradient_magnitude_plane(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let at = |dy: isize, dx: isize| plane[reflect(y as isize + dy, h) * w + reflect(x as isize + dx, w)];
            let (mut gx, mut gy) = (0.0, 0.0);
            for d in -1..=1 {
                gx += at(d, 1) - at(d, -1);
                gy += at(1, d) - at(-1, d);
            }
            out[y * w + x] = ((gx / 3.0).powi(2) + (gy / 3.0).powi(2)).sqrt();
        }
    }
    out
}

fn luma_plane(img: &ImageBuffer) -> Vec<f64> {
    luma(img.pixels(), img.channels()).into_iter().map(f64::from).collect()
}

/// Gradient magnitude of the image's luma.
pub fn gradient_magnitude(img: &ImageBuffer) -> ScoreMap {
    let g = gradient_magnitude_plane(&luma_plane(img), img.height(), img.width());
    ScoreMap {
        height: img.height(),
        width: img.width(),
        values: g.into_iter().map(|v| v as f32).collect(),
    }
}

/// Dissimilarity `1 - (2 ga gb + c) / (ga^2 + gb^2 + c)` of two planes.
/// `c` is in the squared units of the planes' values.
pub fn gms_planes(a: &[f64], b: &[f64], h: usize, w: usize, c: f64) -> Vec<f64> {
    let ga = gradient_magnitude_plane(a, h, w);
    let gb = gradient_magnitude_plane(b, h, w);
    ga.iter()
        .zip(&gb)
        .map(|(&x, &y)| 1.0 - (2.0 * x * y + c) / (x * x + y * y + c))
        .collect()
}

/// GMS map of two `[0, 1]` images; `c` follows the 0..255 convention.
pub fn gms_map(hr: &ImageBuffer, sr: &ImageBuffer, c: f64) -> Result<ScoreMap> {
    if !hr.same_shape(sr) {
        return Err(Error::contract(
            "gms_map",
            format!(
                "images differ: {}x{}x{} vs {}x{}x{}",
                hr.height(),
                hr.width(),
                hr.channels(),
                sr.height(),
                sr.width(),
                sr.channels()
            ),
        ));
    }
    if c <= 0.0 {
        return Err(Error::contract("gms_map", "c must be positive"));
    }
    let (h, w) = (hr.height(), hr.width());
    let map = gms_planes(&luma_plane(hr), &luma_plane(sr), h, w, c / (255.0 * 255.0));
    Ok(ScoreMap {
        height: h,
        width: w,
        values: map.into_iter().map(|v| v as f32).collect(),
    })
}

/// True where the map is at or above `threshold`.
pub fn binarize(map: &ScoreMap, threshold: f32) -> BinaryMask {
    let bits = map.values.iter().map(|&v| v >= threshold).collect();
    BinaryMask::new(map.height, map.width, bits).expect("sizes agree")
}

/// Iteratively blurs a hard mask into scores in `[0, 1]`.
///
/// Each round blurs, clamps, opens the `>= 0.5` level set and halves the
/// pixels the opening removed.
pub fn soften(hard: &BinaryMask, sigma: f64, iterations: usize, element: &StructuringElement) -> Result<ScoreMap> {
    if sigma <= 0.0 || iterations == 0 {
        return Err(Error::contract("soften", "sigma must be positive and iterations at least one"));
    }
    let (h, w) = (hard.height(), hard.width());
    let mut m: Vec<f32> = hard.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    for _ in 0..iterations {
        m = gaussian_blur_reflect(&m, h, w, sigma);
        m.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        let level = BinaryMask::new(h, w, m.iter().map(|&v| v >= 0.5).collect())?;
        let kept = open(&level, element);
        for ((v, &was), &now) in m.iter_mut().zip(level.bits()).zip(kept.bits()) {
            if was && !now {
                *v *= 0.5;
            }
        }
    }
    Ok(ScoreMap {
        height: h,
        width: w,
        values: m,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmsConfig {
    pub c: f64,
    pub threshold: f32,
    pub element_size: usize,
    pub sigma: f64,
    pub iterations: usize,
}

impl Default for GmsConfig {
    fn default() -> Self {
        GmsConfig {
            c: DEFAULT_C,
            threshold: 0.2,
            element_size: 3,
            sigma: 2.0,
            iterations: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmsMasks {
    pub gms: ScoreMap,
    pub hard: BinaryMask,
    pub soft: ScoreMap,
}

/// GMS map, thresholded and opened into a hard mask, then softened.
/// High scores mark poorly reconstructed pixels.
pub fn make_soft_gms_mask(hr: &ImageBuffer, sr: &ImageBuffer, cfg: &GmsConfig) -> Result<GmsMasks> {
    let element = StructuringElement::square(cfg.element_size)?;
    let gms = gms_map(hr, sr, cfg.c)?;
    let hard = open(&binarize(&gms, cfg.threshold), &element);
    let soft = soften(&hard, cfg.sigma, cfg.iterations, &element)?;
    Ok(GmsMasks { gms, hard, soft })
}

/// Multiplies every channel of `img` by the mask.
pub fn apply_mask(img: &ImageBuffer, mask: &ScoreMap) -> Result<ImageBuffer> {
    if img.height() != mask.height || img.width() != mask.width {
        return Err(Error::contract(
            "apply_mask",
            format!(
                "mask is {}x{}, image is {}x{}",
                mask.height,
                mask.width,
                img.height(),
                img.width()
            ),
        ));
    }
    let c = img.channels();
    let px = img
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, &v)| v * mask.values[i / c])
        .collect();
    ImageBuffer::from_unclipped(img.height(), img.width(), c, px)
}
