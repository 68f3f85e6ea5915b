//! IDX binary arrays: two zero bytes, a type code, the rank, `rank`
//! big-endian `u32` dimensions, then the big-endian payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdxType {
    U8,
    I8,
    I16,
    I32,
    F32,
    F64,
}

impl IdxType {
    pub fn code(self) -> u8 {
        match self {
            IdxType::U8 => 0x08,
            IdxType::I8 => 0x09,
            IdxType::I16 => 0x0B,
            IdxType::I32 => 0x0C,
            IdxType::F32 => 0x0D,
            IdxType::F64 => 0x0E,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x08 => IdxType::U8,
            0x09 => IdxType::I8,
            0x0B => IdxType::I16,
            0x0C => IdxType::I32,
            0x0D => IdxType::F32,
            0x0E => IdxType::F64,
            _ => return None,
        })
    }

    pub fn width(self) -> usize {
        match self {
            IdxType::U8 | IdxType::I8 => 1,
            IdxType::I16 => 2,
            IdxType::I32 | IdxType::F32 => 4,
            IdxType::F64 => 8,
        }
    }
}

/// Decoded IDX contents with values as stored (no scaling).
#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub dtype: IdxType,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl IdxArray {
    /// As a tensor; `u8` payloads are scaled by `1/255`.
    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        let scale = if self.dtype == IdxType::U8 { 1.0 / 255.0 } else { 1.0 };
        let data = self.values.iter().map(|&v| (v * scale) as f32).collect();
        Tensor::new(&self.dims, data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![0, 0, self.dtype.code(), self.dims.len() as u8];
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        for &v in &self.values {
            match self.dtype {
                IdxType::U8 => out.push(v as u8),
                IdxType::I8 => out.push(v as i8 as u8),
                IdxType::I16 => out.extend_from_slice(&(v as i16).to_be_bytes()),
                IdxType::I32 => out.extend_from_slice(&(v as i32).to_be_bytes()),
                IdxType::F32 => out.extend_from_slice(&(v as f32).to_be_bytes()),
                IdxType::F64 => out.extend_from_slice(&v.to_be_bytes()),
            }
        }
        out
    }
}

/// Encodes a `[0, 1]` tensor as a `u8` IDX array (rounded to 1/255).
pub fn encode_idx_u8(t: &Tensor<f32>) -> Vec<u8> {
    IdxArray {
        dtype: IdxType::U8,
        dims: t.shape().to_vec(),
        values: t
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as f64)
            .collect(),
    }
    .encode()
}

pub fn parse_idx(bytes: &[u8], source_name: &str) -> Result<IdxArray> {
    let err = |offset: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        location: format!("byte {offset}"),
        message,
    };
    if bytes.len() < 4 {
        return Err(err(bytes.len(), format!("header needs 4 bytes, file has {}", bytes.len())));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(err(0, format!("bad magic {:02x} {:02x}, expected 00 00", bytes[0], bytes[1])));
    }
    let dtype = IdxType::from_code(bytes[2]).ok_or_else(|| err(2, format!("unknown type code 0x{:02x}", bytes[2])))?;
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(err(3, "rank 0 arrays are not supported".into()));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(err(bytes.len(), format!("truncated header: {rank} dimensions need {header} bytes")));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize
        })
        .collect();
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(err(4 + 4 * i, "zero-length dimension".into()));
    }
    let count: usize = dims.iter().product();
    let w = dtype.width();
    let expected = header + count * w;
    if bytes.len() != expected {
        let at = bytes.len().min(expected);
        return Err(err(
            at,
            format!("payload is {} bytes, dims {dims:?} need {}", bytes.len() - header, count * w),
        ));
    }
    let values = bytes[header..]
        .chunks_exact(w)
        .map(|c| match dtype {
            IdxType::U8 => c[0] as f64,
            IdxType::I8 => c[0] as i8 as f64,
            IdxType::I16 => i16::from_be_bytes([c[0], c[1]]) as f64,
            IdxType::I32 => i32::from_be_bytes(c.try_into().expect("4 bytes")) as f64,
            IdxType::F32 => f32::from_be_bytes(c.try_into().expect("4 bytes")) as f64,
            IdxType::F64 => f64::from_be_bytes(c.try_into().expect("8 bytes")),
        })
        .collect();
    Ok(IdxArray { dtype, dims, values })
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, &path.display().to_string())
}

/// Reads an IDX file as a tensor, scaling `u8` payloads to `[0, 1]`.
pub fn load_idx(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    read_idx(path)?.to_tensor()
}
