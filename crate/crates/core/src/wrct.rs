//! WRCT binary tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "WRCT"
//! 4       1     version = 0x01
//! 5       1     role: 0x00 tensor, 0x01 weight field, 0x02 kernel
//! 6       12    dims C, H, W as u32
//! 18      8     kernels only: origin oy, ox as u32
//! ..      8·CHW payload, f64 IEEE-754 little-endian, (c, y, x) order
//! ```
//!
//! Nothing else is stored, so a file is exactly header plus payload.

use std::fs;
use std::path::Path;

use crate::error::{Result, WrcError};
use crate::tensor::{FeatureMap, Kernel, Shape, WeightField, WeightRole};

pub const MAGIC: &[u8; 4] = b"WRCT";
pub const VERSION: u8 = 0x01;

const ROLE_TENSOR: u8 = 0x00;
const ROLE_WEIGHT: u8 = 0x01;
const ROLE_KERNEL: u8 = 0x02;

/// Any decoded WRCT file.
#[derive(Debug, Clone, PartialEq)]
pub enum WrctRecord {
    Tensor(FeatureMap),
    /// Weight fields do not record which objective term they belong to; the
    /// role is assigned by the reader.
    Weight(FeatureMap),
    Kernel(Kernel),
}

impl WrctRecord {
    pub fn role_name(&self) -> &'static str {
        match self {
            WrctRecord::Tensor(_) => "tensor",
            WrctRecord::Weight(_) => "weight-field",
            WrctRecord::Kernel(_) => "kernel",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            WrctRecord::Tensor(t) => encode_raw(ROLE_TENSOR, t.shape(), None, t.data()),
            WrctRecord::Weight(t) => encode_raw(ROLE_WEIGHT, t.shape(), None, t.data()),
            WrctRecord::Kernel(k) => {
                let (kh, kw) = k.size();
                encode_raw(
                    ROLE_KERNEL,
                    Shape::new(k.channels(), kh, kw),
                    Some(k.origin()),
                    k.taps(),
                )
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<WrctRecord> {
        if bytes.len() < 18 {
            return Err(WrcError::Format(format!(
                "file is {} bytes, shorter than the 18-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(WrcError::Format(format!("bad magic {:?}", &bytes[0..4])));
        }
        if bytes[4] != VERSION {
            return Err(WrcError::Format(format!(
                "unsupported version {:#04x}",
                bytes[4]
            )));
        }
        let role = bytes[5];
        let c = read_u32(bytes, 6) as usize;
        let h = read_u32(bytes, 10) as usize;
        let w = read_u32(bytes, 14) as usize;
        let mut pos = 18;
        let origin = if role == ROLE_KERNEL {
            if bytes.len() < 26 {
                return Err(WrcError::Format("kernel header truncated".into()));
            }
            pos = 26;
            Some((read_u32(bytes, 18) as usize, read_u32(bytes, 22) as usize))
        } else {
            None
        };
        let count = c
            .checked_mul(h)
            .and_then(|n| n.checked_mul(w))
            .ok_or_else(|| WrcError::Format(format!("dims {c}x{h}x{w} overflow")))?;
        let expected = count * 8;
        let payload = &bytes[pos..];
        if payload.len() < expected {
            return Err(WrcError::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!(
                    "payload has {} bytes, dims {c}x{h}x{w} need {expected}",
                    payload.len()
                ),
            )));
        }
        if payload.len() > expected {
            return Err(WrcError::Format(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let shape = Shape::new(c, h, w);
        match role {
            ROLE_TENSOR => Ok(WrctRecord::Tensor(FeatureMap::new(shape, data)?)),
            ROLE_WEIGHT => Ok(WrctRecord::Weight(FeatureMap::new(shape, data)?)),
            ROLE_KERNEL => {
                let origin = origin.expect("kernel header parsed above");
                Ok(WrctRecord::Kernel(Kernel::new(c, h, w, data, origin)?))
            }
            other => Err(WrcError::Format(format!("unknown role byte {other:#04x}"))),
        }
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn encode_raw(role: u8, shape: Shape, origin: Option<(usize, usize)>, data: &[f64]) -> Vec<u8> {
    let header = if origin.is_some() { 26 } else { 18 };
    let mut out = Vec::with_capacity(header + data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(role);
    for d in [shape.channels, shape.height, shape.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    if let Some((oy, ox)) = origin {
        out.extend_from_slice(&(oy as u32).to_le_bytes());
        out.extend_from_slice(&(ox as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_record(path: impl AsRef<Path>) -> Result<WrctRecord> {
    WrctRecord::decode(&fs::read(path)?)
}

pub fn write_record(record: &WrctRecord, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, record.encode())?;
    Ok(())
}

/// Reads a plain tensor file. Weight-field files are accepted as well since
/// they carry the same payload.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureMap> {
    match read_record(path)? {
        WrctRecord::Tensor(t) | WrctRecord::Weight(t) => Ok(t),
        WrctRecord::Kernel(_) => Err(WrcError::Format("expected a tensor, found a kernel".into())),
    }
}

pub fn write_tensor(t: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    write_record(&WrctRecord::Tensor(t.clone()), path)
}

pub fn encode_tensor(t: &FeatureMap) -> Vec<u8> {
    encode_raw(ROLE_TENSOR, t.shape(), None, t.data())
}

pub fn read_kernel(path: impl AsRef<Path>) -> Result<Kernel> {
    match read_record(path)? {
        WrctRecord::Kernel(k) => Ok(k),
        other => Err(WrcError::Format(format!(
            "expected a kernel, found a {}",
            other.role_name()
        ))),
    }
}

pub fn write_kernel(k: &Kernel, path: impl AsRef<Path>) -> Result<()> {
    write_record(&WrctRecord::Kernel(k.clone()), path)
}

pub fn read_weight_field(path: impl AsRef<Path>, role: WeightRole) -> Result<WeightField> {
    let t = read_tensor(path)?;
    WeightField::from_map(&t, role)
}

pub fn write_weight_field(w: &WeightField, path: impl AsRef<Path>) -> Result<()> {
    write_record(&WrctRecord::Weight(w.to_feature_map()), path)
}
