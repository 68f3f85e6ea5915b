//! Binary PGM (`P5`, maxval 255) export of single frames.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encodes a `[H × W]` frame with intensities in `[0, 1]`.
pub fn encode_pgm(frame: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = frame.shape();
    if s.len() != 2 {
        return Err(Error::shape("encode_pgm", s, &[0, 0]));
    }
    let mut out = format!("P5\n{} {}\n255\n", s[1], s[0]).into_bytes();
    out.extend(frame.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, frame: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(frame)?).map_err(|e| Error::io(path, e))
}

/// Decodes a `P5` image with maxval 255 back to `[0, 1]` intensities.
pub fn decode_pgm(bytes: &[u8], source_name: &str) -> Result<Tensor<f32>> {
    let err = |message: &str| Error::Parse {
        source_name: source_name.to_string(),
        location: "header".into(),
        message: message.into(),
    };
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("non-ascii header"))?);
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(err("expected P5 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| err("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| err("bad height"))?;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != w * h {
        return Err(err("payload size does not match dimensions"));
    }
    Tensor::new(&[h, w], payload.iter().map(|&b| b as f32 / 255.0).collect())
}
