use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::filter::reflect;
use crate::tensor::Tensor;

/// `H x W x C` image with channel-interleaved values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::contract("image", format!("{channels} channels, expected 1 or 3")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::contract(
                "image",
                format!("{} values for a {height}x{width}x{channels} image", pixels.len()),
            ));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::contract("image", format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(ImageBuffer {
            height,
            width,
            channels,
            pixels,
        })
    }

    /// Builds an image from arbitrary values, clipping to `[0, 1]` (NaN becomes 0).
    pub fn from_unclipped(height: usize, width: usize, channels: usize, mut pixels: Vec<f32>) -> Result<Self> {
        for v in &mut pixels {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, channels, pixels)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(y, x, c));
                }
            }
        }
        Self::from_unclipped(height, width, channels, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        (self.height, self.width, self.channels) == (other.height, other.width, other.channels)
    }

    /// One channel as a contiguous `H x W` plane.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        self.pixels.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f32>]) -> Result<Self> {
        let channels = planes.len();
        let mut pixels = vec![0.0; height * width * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                pixels[i * channels + c] = v;
            }
        }
        Self::from_unclipped(height, width, channels, pixels)
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::contract(
                "crop",
                format!("{h}x{w} at ({y0}, {x0}) exceeds {}x{}", self.height, self.width),
            ));
        }
        let c = self.channels;
        let mut pixels = Vec::with_capacity(h * w * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            pixels.extend_from_slice(&self.pixels[start..start + w * c]);
        }
        Ok(ImageBuffer {
            height: h,
            width: w,
            channels: c,
            pixels,
        })
    }

    /// Element `d` (0..8) of the dihedral group: `d % 4` quarter turns
    /// counter-clockwise, then a horizontal flip when `d >= 4`.
    pub fn dihedral(&self, d: u8) -> ImageBuffer {
        let mut img = self.clone();
        for _ in 0..d % 4 {
            img = img.rotate90();
        }
        if d >= 4 {
            img = img.flip_horizontal();
        }
        img
    }

    fn rotate90(&self) -> ImageBuffer {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut pixels = vec![0.0; self.pixels.len()];
        // new[y][x] = old[x][w - 1 - y], new image is w x h
        for y in 0..w {
            for x in 0..h {
                let src = (x * w + (w - 1 - y)) * c;
                let dst = (y * h + x) * c;
                pixels[dst..dst + c].copy_from_slice(&self.pixels[src..src + c]);
            }
        }
        ImageBuffer {
            height: w,
            width: h,
            channels: c,
            pixels,
        }
    }

    fn flip_horizontal(&self) -> ImageBuffer {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut pixels = vec![0.0; self.pixels.len()];
        for y in 0..h {
            for x in 0..w {
                let src = (y * w + (w - 1 - x)) * c;
                let dst = (y * w + x) * c;
                pixels[dst..dst + c].copy_from_slice(&self.pixels[src..src + c]);
            }
        }
        ImageBuffer {
            height: h,
            width: w,
            channels: c,
            pixels,
        }
    }

    /// Three-channel copy; gray values are replicated.
    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        ImageBuffer {
            channels: 3,
            pixels: self.pixels.iter().flat_map(|&v| [v, v, v]).collect(),
            ..*self
        }
    }

    /// Extends the image to `height x width` by mirroring past the bottom and
    /// right edges (edge samples are not repeated).
    pub fn pad_reflect(&self, height: usize, width: usize) -> Result<ImageBuffer> {
        if height < self.height || width < self.width || self.height == 0 || self.width == 0 {
            return Err(Error::contract(
                "pad_reflect",
                format!("cannot pad {}x{} to {height}x{width}", self.height, self.width),
            ));
        }
        let c = self.channels;
        let mut pixels = Vec::with_capacity(height * width * c);
        for y in 0..height {
            let sy = reflect(y as isize, self.height);
            for x in 0..width {
                let sx = reflect(x as isize, self.width);
                let at = (sy * self.width + sx) * c;
                pixels.extend_from_slice(&self.pixels[at..at + c]);
            }
        }
        Ok(ImageBuffer {
            height,
            width,
            channels: c,
            pixels,
        })
    }

    /// `(1, C, H, W)` tensor view of the image.
    pub fn to_tensor(&self) -> Tensor {
        let (h, w, c) = (self.height, self.width, self.channels);
        Tensor::from_fn((1, c, h, w), |i| {
            let ch = i / (h * w);
            let p = i % (h * w);
            self.pixels[p * c + ch]
        })
    }

    /// Batch item `n` of a `(N, C, H, W)` tensor, clipped into `[0, 1]`.
    pub fn from_tensor(t: &Tensor, n: usize) -> Result<Self> {
        let s = t.shape();
        let item = t.batch_item(n);
        let planes: Vec<Vec<f32>> = item.data().chunks(s.plane()).map(<[f32]>::to_vec).collect();
        Self::from_planes(s.h, s.w, &planes)
    }
}

/// Loads an 8- or 16-bit PNG (gray or color; alpha is dropped) into `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        ImageBuffer::from_unclipped(h, w, 3, img.to_rgb32f().into_raw())
    } else {
        ImageBuffer::from_unclipped(h, w, 1, img.to_luma32f().into_raw())
    }
}

fn quantize(v: f32) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Writes an 8-bit PNG, rounding half up.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.pixels.iter().map(|&v| quantize(v)).collect();
    let (w, h) = (img.width as u32, img.height as u32);
    let dynamic = match img.channels {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("buffer sized by construction")),
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer sized by construction")),
    };
    dynamic
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_path_buf(),
                msg: other.to_string(),
            },
        })
}
