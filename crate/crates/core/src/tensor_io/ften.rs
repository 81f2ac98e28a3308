//! FTEN binary tensors.
//!
//! Layout (little-endian):
//!
//! | offset | size        | content                     |
//! |--------|-------------|-----------------------------|
//! | 0      | 4           | magic `FTEN`                |
//! | 4      | 2           | version, `u16` = 1          |
//! | 6      | 1           | dtype code, 1 = `f32`       |
//! | 7      | 1           | ndim, 1..=3                 |
//! | 8      | 4 · ndim    | dims, `u32` each            |
//! | …      | 4 · Π dims  | `f32` payload, row-major    |

use std::fs;
use std::path::Path;

use crate::error::{FrodoError, Result};

pub const MAGIC: [u8; 4] = *b"FTEN";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 8;

/// A validated FTEN payload of rank 1, 2 or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Ften {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Ften {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(FrodoError::Shape(format!(
                "FTEN rank must be 1, 2 or 3, got {}",
                dims.len()
            )));
        }
        if let Some(bad) = dims.iter().find(|&&d| d == 0 || d > u32::MAX as usize) {
            return Err(FrodoError::Shape(format!("dimension {bad} out of range")));
        }
        let numel = element_count(&dims)
            .ok_or_else(|| FrodoError::Shape(format!("dims {dims:?} overflow")))?;
        if numel != data.len() {
            return Err(FrodoError::Shape(format!(
                "dims {dims:?} need {numel} elements, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Ften { dims, data })
    }

    pub fn vector(data: Vec<f32>) -> Result<Self> {
        Ften::new(vec![data.len()], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.dims, self.data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a complete file image. `path` is only used for error messages.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let format = |reason: String| FrodoError::Format {
            path: path.to_path_buf(),
            reason,
        };
        let corrupt = |reason: String| FrodoError::CorruptFile {
            path: path.to_path_buf(),
            reason,
        };

        if bytes.len() < HEADER_LEN {
            return Err(format(format!("header truncated at {} bytes", bytes.len())));
        }
        if bytes[0..4] != MAGIC {
            return Err(format(format!("bad magic {:?}", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(format(format!("unsupported version {version}")));
        }
        if bytes[6] != DTYPE_F32 {
            return Err(format(format!("unsupported dtype code {}", bytes[6])));
        }
        let ndim = bytes[7] as usize;
        if !(1..=3).contains(&ndim) {
            return Err(format(format!("unsupported ndim {ndim}")));
        }

        let payload_start = HEADER_LEN + 4 * ndim;
        if bytes.len() < payload_start {
            return Err(corrupt("dims truncated".into()));
        }
        let dims: Vec<usize> = bytes[HEADER_LEN..payload_start]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        if dims.contains(&0) {
            return Err(corrupt(format!("zero dimension in {dims:?}")));
        }
        let numel = element_count(&dims)
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| corrupt(format!("dims {dims:?} overflow")))?;
        let payload = &bytes[payload_start..];
        if payload.len() != numel * 4 {
            return Err(corrupt(format!(
                "dims {dims:?} need {} payload bytes, found {}",
                numel * 4,
                payload.len()
            )));
        }

        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        check_finite(&data).map_err(|e| e.context(path.display().to_string()))?;
        Ok(Ften { dims, data })
    }
}

fn element_count(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(FrodoError::NonFiniteData { index }),
        None => Ok(()),
    }
}

pub fn read_ften(path: impl AsRef<Path>) -> Result<Ften> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FrodoError::io(path, e))?;
    Ften::decode(&bytes, path)
}

pub fn write_ften(tensor: &Ften, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.encode()).map_err(|e| FrodoError::io(path, e))
}

/// Raw activation block of one sample at one layer, stored (H, W, C)
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(dims: (usize, usize, usize), data: Vec<f32>) -> Result<Self> {
        let (height, width, channels) = dims;
        // reuse the FTEN checks: positive dims, length, finiteness
        let (_, data) = Ften::new(vec![height, width, channels], data)?.into_parts();
        Ok(FeatureTensor {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data[(h * self.width + w) * self.channels + c]
    }

    pub fn to_ften(&self) -> Ften {
        Ften {
            dims: vec![self.height, self.width, self.channels],
            data: self.data.clone(),
        }
    }
}

impl TryFrom<Ften> for FeatureTensor {
    type Error = FrodoError;

    /// Rank-3 files map directly; a rank-1 file of length C is an already
    /// pooled vector and becomes a 1×1×C block.
    fn try_from(t: Ften) -> Result<Self> {
        let (dims, data) = t.into_parts();
        let (height, width, channels) = match dims[..] {
            [h, w, c] => (h, w, c),
            [c] => (1, 1, c),
            _ => {
                return Err(FrodoError::Shape(format!(
                    "feature tensor must be rank 3 (or a rank-1 pooled vector), got dims {dims:?}"
                )))
            }
        };
        Ok(FeatureTensor {
            height,
            width,
            channels,
            data,
        })
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    FeatureTensor::try_from(read_ften(path)?).map_err(|e| e.context(path.display().to_string()))
}

pub fn write_tensor(tensor: &FeatureTensor, path: impl AsRef<Path>) -> Result<()> {
    write_ften(&tensor.to_ften(), path)
}
