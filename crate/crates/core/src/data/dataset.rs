use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use super::{load_image, ImageBuffer};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};
use crate::tensor::Tensor;

/// Reads `degraded<TAB>target` lines. Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<(PathBuf, PathBuf)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut pairs = Vec::new();
    for (lineno, line) in text.split('\n').enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (degraded, target) = line.split_once('\t').ok_or_else(|| Error::Image {
            path: path.to_path_buf(),
            msg: format!("line {}: expected `degraded<TAB>target`", lineno + 1),
        })?;
        pairs.push((base.join(degraded), base.join(target)));
    }
    Ok(pairs)
}

pub fn write_manifest(path: impl AsRef<Path>, pairs: &[(PathBuf, PathBuf)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (d, t) in pairs {
        writeln!(out, "{}\t{}", d.display(), t.display()).expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Validated list of training pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub pairs: Vec<(PathBuf, PathBuf)>,
    pub patch_size: usize,
    pub seed: u64,
}

impl DatasetIndex {
    /// Reads a manifest and checks every referenced file decodes as an image header.
    pub fn from_manifest(path: impl AsRef<Path>, patch_size: usize, seed: u64) -> Result<Self> {
        let pairs = read_manifest(path)?;
        for (d, t) in &pairs {
            for p in [d, t] {
                image::image_dimensions(p).map_err(|e| match e {
                    image::ImageError::IoError(io) => Error::io(p, io),
                    other => Error::Image {
                        path: p.clone(),
                        msg: other.to_string(),
                    },
                })?;
            }
        }
        Ok(DatasetIndex {
            pairs,
            patch_size,
            seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub name: String,
    pub degraded: ImageBuffer,
    pub target: ImageBuffer,
}

/// Aligned crops of one pair after identical augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub degraded: ImageBuffer,
    pub target: ImageBuffer,
    pub item: usize,
    pub y: usize,
    pub x: usize,
    pub dihedral: u8,
}

/// A mini-batch as `(N, C, H, W)` tensors plus the source item of each entry.
#[derive(Clone, Debug)]
pub struct Batch {
    pub degraded: Tensor,
    pub target: Tensor,
    pub items: Vec<usize>,
}

/// In-memory paired dataset. `scale` is the target/degraded size ratio (1 for
/// denoising and deblurring).
#[derive(Clone, Debug)]
pub struct PairedDataset {
    items: Vec<ImagePair>,
    patch_size: usize,
    scale: usize,
    augment: bool,
}

impl PairedDataset {
    /// Keeps pairs large enough for a patch, warning about the rest.
    pub fn from_pairs(pairs: Vec<ImagePair>, patch_size: usize, scale: usize, augment: bool) -> Result<Self> {
        if patch_size == 0 || scale == 0 {
            return Err(Error::contract("dataset", "patch size and scale must be positive"));
        }
        let mut items = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let (d, t) = (&pair.degraded, &pair.target);
            let aligned = t.height() == d.height() * scale
                && t.width() == d.width() * scale
                && t.channels() == d.channels();
            if !aligned {
                return Err(Error::contract(
                    "dataset",
                    format!(
                        "{}: degraded {}x{} does not match target {}x{} at scale {scale}",
                        pair.name,
                        d.height(),
                        d.width(),
                        t.height(),
                        t.width()
                    ),
                ));
            }
            if d.height() < patch_size || d.width() < patch_size {
                log::warn!(
                    "skipping {}: {}x{} is smaller than the {patch_size}px patch",
                    pair.name,
                    d.height(),
                    d.width()
                );
                continue;
            }
            items.push(pair);
        }
        Ok(PairedDataset {
            items,
            patch_size,
            scale,
            augment,
        })
    }

    /// Loads every pair from disk, expanding gray images to RGB.
    pub fn load(index: &DatasetIndex, scale: usize, augment: bool) -> Result<Self> {
        let pairs = index
            .pairs
            .iter()
            .map(|(d, t)| {
                Ok(ImagePair {
                    name: t.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                    degraded: load_image(d)?.to_rgb(),
                    target: load_image(t)?.to_rgb(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(pairs, index.patch_size, scale, augment)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ImagePair] {
        &self.items
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn sample_patch_pair(&self, rng: &mut Rng) -> Result<PatchPair> {
        if self.items.is_empty() {
            return Err(Error::contract("sample_patch_pair", "dataset is empty"));
        }
        let item = rng.random_range(0..self.items.len());
        let pair = &self.items[item];
        let p = self.patch_size;
        let y = rng.random_range(0..=pair.degraded.height() - p);
        let x = rng.random_range(0..=pair.degraded.width() - p);
        let dihedral = if self.augment { rng.random_range(0..8u8) } else { 0 };
        let s = self.scale;
        let degraded = pair.degraded.crop(y, x, p, p)?.dihedral(dihedral);
        let target = pair.target.crop(y * s, x * s, p * s, p * s)?.dihedral(dihedral);
        Ok(PatchPair {
            degraded,
            target,
            item,
            y,
            x,
            dihedral,
        })
    }

    /// Batch for training step `step`; sample `i` draws from stream `step * size + i`.
    pub fn batch(&self, seed: u64, step: u64, size: usize) -> Result<Batch> {
        let mut degraded = Vec::with_capacity(size);
        let mut target = Vec::with_capacity(size);
        let mut items = Vec::with_capacity(size);
        for i in 0..size {
            let mut rng = rng_for(seed, step * size as u64 + i as u64);
            let pp = self.sample_patch_pair(&mut rng)?;
            degraded.push(pp.degraded.to_tensor());
            target.push(pp.target.to_tensor());
            items.push(pp.item);
        }
        Ok(Batch {
            degraded: Tensor::stack(&degraded)?,
            target: Tensor::stack(&target)?,
            items,
        })
    }
}
