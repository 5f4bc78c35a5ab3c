//! Binary container shared by model and high-pass network checkpoints.
//!
//! Layout, all integers little endian:
//!
//! ```text
//! magic       4 bytes
//! version     u32
//! config      u64 length + UTF-8 TOML
//! params      u64 count + f32 values
//! adam        u8 flag; when 1: u64 t, u64 tensors, then per tensor
//!             u64 length + first moments + second moments
//! step        u64
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig};

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_MAGIC: [u8; 4] = *b"HFAE";
pub const PHI_MAGIC: [u8; 4] = *b"HFPH";

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub first: Vec<Vec<f32>>,
    pub second: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn capture(adam: &Adam) -> Self {
        AdamState {
            t: adam.steps(),
            first: adam.first_moments().to_vec(),
            second: adam.second_moments().to_vec(),
        }
    }

    pub fn restore(self, config: AdamConfig) -> Result<Adam> {
        Adam::from_parts(config, self.t, self.first, self.second)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub magic: [u8; 4],
    pub config: String,
    pub params: Vec<f32>,
    pub adam: Option<AdamState>,
    pub step: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.config.len() + 4 * self.params.len());
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        put_f32s(&mut out, &self.params);
        match &self.adam {
            None => out.push(0),
            Some(a) => {
                out.push(1);
                out.extend_from_slice(&a.t.to_le_bytes());
                out.extend_from_slice(&(a.first.len() as u64).to_le_bytes());
                for (m, v) in a.first.iter().zip(&a.second) {
                    out.extend_from_slice(&(m.len() as u64).to_le_bytes());
                    m.iter().chain(v).for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
            }
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out
    }

    /// Parses a container, requiring `magic` and the current format version.
    pub fn from_bytes(bytes: &[u8], magic: [u8; 4]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let found = r.take("magic", 4)?;
        if found != magic {
            return Err(Error::Checkpoint {
                field: "magic",
                msg: format!(
                    "expected {:?}, found {:?}",
                    String::from_utf8_lossy(&magic),
                    String::from_utf8_lossy(found)
                ),
            });
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint {
                field: "version",
                msg: format!("unsupported format version {version}, this build reads {FORMAT_VERSION}"),
            });
        }
        let len = r.len("config", 1)?;
        let config = String::from_utf8(r.take("config", len)?.to_vec()).map_err(|_| Error::Checkpoint {
            field: "config",
            msg: "not valid UTF-8".into(),
        })?;
        let count = r.len("params", 4)?;
        let params = r.f32s("params", count)?;
        let adam = match r.take("adam", 1)?[0] {
            0 => None,
            1 => {
                let t = r.u64("adam")?;
                let tensors = r.len("adam", 8)?;
                let (mut first, mut second) = (Vec::with_capacity(tensors), Vec::with_capacity(tensors));
                for _ in 0..tensors {
                    let n = r.len("adam", 8)?;
                    first.push(r.f32s("adam", n)?);
                    second.push(r.f32s("adam", n)?);
                }
                Some(AdamState { t, first, second })
            }
            flag => {
                return Err(Error::Checkpoint {
                    field: "adam",
                    msg: format!("invalid presence flag {flag}"),
                })
            }
        };
        let step = r.u64("step")?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint {
                field: "step",
                msg: format!("{} trailing bytes after the last field", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint {
            magic,
            config,
            params,
            adam,
            step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, magic: [u8; 4]) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, magic)
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    values.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, field: &'static str, n: usize) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(Error::Checkpoint {
                field,
                msg: format!("truncated: need {n} bytes at offset {}, {remaining} left", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(field, 4)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(field, 8)?.try_into().unwrap()))
    }

    /// Reads an element count and checks it fits in what is left.
    fn len(&mut self, field: &'static str, elem: usize) -> Result<usize> {
        let n = self.u64(field)?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n.checked_mul(elem as u64).is_none_or(|b| b > remaining) {
            return Err(Error::Checkpoint {
                field,
                msg: format!("truncated: declares {n} entries, only {remaining} bytes left"),
            });
        }
        Ok(n as usize)
    }

    fn f32s(&mut self, field: &'static str, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(field, n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
