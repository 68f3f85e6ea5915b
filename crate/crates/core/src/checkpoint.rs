//! Model checkpoints.
//!
//! Layout: one version byte, a little-endian `u32` manifest length, the
//! UTF-8 manifest, then each tensor's little-endian payload in manifest
//! order. Manifest lines:
//!
//! ```text
//! dtype f32
//! meta <key> = <value>
//! tensor <name> <param|buffer> <quantizable 0|1> <d0,d1,...>
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Scalar, Tensor};
use crate::training::Model;

pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    Param,
    Buffer,
}

impl EntryKind {
    fn name(self) -> &'static str {
        match self {
            EntryKind::Param => "param",
            EntryKind::Buffer => "buffer",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry<T: Scalar> {
    pub name: String,
    pub kind: EntryKind,
    pub quantizable: bool,
    pub tensor: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T: Scalar = f32> {
    pub meta: Vec<(String, String)>,
    pub entries: Vec<Entry<T>>,
}

impl<T: Scalar> Default for Checkpoint<T> {
    fn default() -> Self {
        Checkpoint {
            meta: Vec::new(),
            entries: Vec::new(),
        }
    }
}

impl<T: Scalar> Checkpoint<T> {
    /// Shadow weights and buffers of `model`.
    pub fn from_model<M: Model<T>>(model: &M, meta: Vec<(String, String)>) -> Self {
        let mut entries: Vec<Entry<T>> = model
            .params()
            .iter()
            .map(|p| Entry {
                name: p.name.clone(),
                kind: EntryKind::Param,
                quantizable: p.quantizable,
                tensor: p.value.clone(),
            })
            .collect();
        entries.extend(model.buffers().into_iter().map(|(name, tensor)| Entry {
            name,
            kind: EntryKind::Buffer,
            quantizable: false,
            tensor,
        }));
        Checkpoint { meta, entries }
    }

    /// Restores every parameter and buffer of `model` by name.
    pub fn apply_to<M: Model<T>>(&self, model: &mut M) -> Result<()> {
        let n_params = model.params().len();
        let mut seen = 0;
        for e in &self.entries {
            match e.kind {
                EntryKind::Param => {
                    let id = model
                        .params()
                        .find(&e.name)
                        .ok_or_else(|| Error::Data(format!("checkpoint parameter '{}' is not in the model", e.name)))?;
                    model.params_mut().set_value(id, e.tensor.clone())?;
                    seen += 1;
                }
                EntryKind::Buffer => model.set_buffer(&e.name, &e.tensor)?,
            }
        }
        if seen != n_params {
            return Err(Error::Data(format!(
                "checkpoint holds {seen} of the model's {n_params} parameters"
            )));
        }
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entry(&self, name: &str) -> Option<&Entry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut manifest = format!("dtype {}\n", T::DTYPE.name());
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(Error::Data(format!("meta entry '{k}' cannot be stored")));
            }
            manifest.push_str(&format!("meta {k} = {v}\n"));
        }
        for e in &self.entries {
            if e.name.is_empty() || e.name.contains(char::is_whitespace) {
                return Err(Error::Data(format!("tensor name '{}' cannot be stored", e.name)));
            }
            let dims: Vec<String> = e.tensor.shape().iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!(
                "tensor {} {} {} {}\n",
                e.name,
                e.kind.name(),
                u8::from(e.quantizable),
                dims.join(",")
            ));
        }
        let mut out = vec![VERSION];
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for e in &self.entries {
            for &v in e.tensor.data() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], source_name: &str) -> Result<Self> {
        let err = |location: String, message: String| Error::Parse {
            source_name: source_name.to_string(),
            location,
            message,
        };
        if bytes.len() < 5 {
            return Err(err("byte 0".into(), "file too short for a checkpoint header".into()));
        }
        if bytes[0] != VERSION {
            return Err(err("byte 0".into(), format!("unsupported checkpoint version {}", bytes[0])));
        }
        let len = u32::from_le_bytes(bytes[1..5].try_into().expect("4 bytes")) as usize;
        let manifest = bytes
            .get(5..5 + len)
            .ok_or_else(|| err("byte 1".into(), format!("manifest length {len} exceeds file size")))?;
        let manifest = std::str::from_utf8(manifest).map_err(|_| err("manifest".into(), "not UTF-8".into()))?;
        let mut ck = Checkpoint::default();
        let mut shapes = Vec::new();
        for (i, line) in manifest.lines().enumerate() {
            let loc = || format!("manifest line {}", i + 1);
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            match tag {
                "dtype" => {
                    let d = DType::parse(rest.trim()).ok_or_else(|| err(loc(), format!("unknown dtype '{rest}'")))?;
                    if d != T::DTYPE {
                        return Err(Error::Data(format!(
                            "{source_name} stores {} tensors, expected {}",
                            d.name(),
                            T::DTYPE.name()
                        )));
                    }
                }
                "meta" => {
                    let (k, v) = rest
                        .split_once(" = ")
                        .ok_or_else(|| err(loc(), "expected 'meta key = value'".into()))?;
                    ck.meta.push((k.to_string(), v.to_string()));
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 4 {
                        return Err(err(loc(), "expected 'tensor name kind quantizable dims'".into()));
                    }
                    let kind = match f[1] {
                        "param" => EntryKind::Param,
                        "buffer" => EntryKind::Buffer,
                        other => return Err(err(loc(), format!("unknown tensor kind '{other}'"))),
                    };
                    let quantizable = match f[2] {
                        "0" => false,
                        "1" => true,
                        other => return Err(err(loc(), format!("bad quantizable flag '{other}'"))),
                    };
                    let dims = f[3]
                        .split(',')
                        .map(|d| d.parse::<usize>().ok().filter(|&d| d > 0))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| err(loc(), format!("bad dimensions '{}'", f[3])))?;
                    shapes.push((f[0].to_string(), kind, quantizable, dims));
                }
                _ => return Err(err(loc(), format!("unknown manifest entry '{tag}'"))),
            }
        }
        let width = T::DTYPE.size_of();
        let mut pos = 5 + len;
        for (name, kind, quantizable, dims) in shapes {
            let count: usize = dims.iter().product();
            let end = pos + count * width;
            let payload = bytes
                .get(pos..end)
                .ok_or_else(|| err(format!("byte {}", bytes.len()), format!("payload of '{name}' is truncated")))?;
            let data = payload.chunks_exact(width).map(T::read_le).collect();
            ck.entries.push(Entry {
                name,
                kind,
                quantizable,
                tensor: Tensor::new(&dims, data)?,
            });
            pos = end;
        }
        if pos != bytes.len() {
            return Err(err(format!("byte {pos}"), "trailing bytes after the last tensor".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }
}
