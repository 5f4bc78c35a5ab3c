//! Binary erosion, dilation and opening. Pixels outside the image are false.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::contract(
                "binary mask",
                format!("{} bits for a {height}x{width} mask", bits.len()),
            ));
        }
        Ok(BinaryMask { height, width, bits })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        BinaryMask {
            height,
            width,
            bits: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Value at a signed position; outside the image is false.
    fn at(&self, y: isize, x: isize) -> bool {
        y >= 0 && x >= 0 && (y as usize) < self.height && (x as usize) < self.width && self.get(y as usize, x as usize)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        BinaryMask {
            bits: self.bits.iter().map(|b| !b).collect(),
            ..self.clone()
        }
    }

    /// Whether every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Odd square footprint with a true center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    size: usize,
    footprint: Vec<bool>,
}

impl StructuringElement {
    pub fn new(size: usize, footprint: Vec<bool>) -> Result<Self> {
        if size.is_multiple_of(2) || footprint.len() != size * size {
            return Err(Error::contract(
                "structuring element",
                format!("footprint must be odd and square, got size {size} with {} cells", footprint.len()),
            ));
        }
        if !footprint[size * size / 2] {
            return Err(Error::contract("structuring element", "center cell must be set"));
        }
        Ok(StructuringElement { size, footprint })
    }

    pub fn square(size: usize) -> Result<Self> {
        Self::new(size, vec![true; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Offsets `(dy, dx)` of the set cells, relative to the center.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let r = (self.size / 2) as isize;
        (0..self.size * self.size)
            .filter(|&i| self.footprint[i])
            .map(|i| ((i / self.size) as isize - r, (i % self.size) as isize - r))
            .collect()
    }

    /// Point reflection through the center.
    pub fn reflected(&self) -> Self {
        StructuringElement {
            size: self.size,
            footprint: self.footprint.iter().rev().copied().collect(),
        }
    }
}

/// `p` survives when `A(p + b)` holds for every offset `b`.
pub fn erode(a: &BinaryMask, b: &StructuringElement) -> BinaryMask {
    let offsets = b.offsets();
    morph(a, |y, x| offsets.iter().all(|&(dy, dx)| a.at(y + dy, x + dx)))
}

/// `p` is set when `A(p - b)` holds for some offset `b`.
pub fn dilate(a: &BinaryMask, b: &StructuringElement) -> BinaryMask {
    let offsets = b.offsets();
    morph(a, |y, x| offsets.iter().any(|&(dy, dx)| a.at(y - dy, x - dx)))
}

pub fn open(a: &BinaryMask, b: &StructuringElement) -> BinaryMask {
    dilate(&erode(a, b), b)
}

fn morph(a: &BinaryMask, f: impl Fn(isize, isize) -> bool) -> BinaryMask {
    let mut bits = Vec::with_capacity(a.bits.len());
    for y in 0..a.height as isize {
        for x in 0..a.width as isize {
            bits.push(f(y, x));
        }
    }
    BinaryMask { bits, ..a.clone() }
}
