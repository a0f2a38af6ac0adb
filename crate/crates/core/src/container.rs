//! Binary model container.
//!
//! Layout: magic, `u32` version, `u32` manifest length, manifest, data,
//! CRC-32 of everything before it. The manifest has one line per tensor,
//! `name \t shape \t dtype \t offset \t length`, with offsets relative to
//! the start of the data section. All numbers are little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, PathContext, Result};

pub const MAGIC: [u8; 8] = *b"EMRSEG1\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    U64(Vec<u64>),
    Utf8(String),
}

impl TensorData {
    fn dtype(&self) -> &'static str {
        match self {
            TensorData::F64(_) => "f64",
            TensorData::U64(_) => "u64",
            TensorData::Utf8(_) => "utf8",
        }
    }

    fn byte_len(&self) -> usize {
        match self {
            TensorData::F64(v) => v.len() * 8,
            TensorData::U64(v) => v.len() * 8,
            TensorData::Utf8(s) => s.len(),
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::Utf8(s) => out.extend_from_slice(s.as_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

/// Named tensors, written in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    tensors: BTreeMap<String, Tensor>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_f64(&mut self, name: &str, shape: &[usize], data: Vec<f64>) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor {name}");
        self.insert(name, shape.to_vec(), TensorData::F64(data));
    }

    pub fn insert_u64(&mut self, name: &str, data: Vec<u64>) {
        self.insert(name, vec![data.len()], TensorData::U64(data));
    }

    pub fn insert_text(&mut self, name: &str, text: impl Into<String>) {
        let text = text.into();
        self.insert(name, vec![text.len()], TensorData::Utf8(text));
    }

    fn insert(&mut self, name: &str, shape: Vec<usize>, data: TensorData) {
        assert!(
            !name.is_empty() && !name.contains(['\t', '\n']),
            "bad tensor name {name:?}"
        );
        self.tensors.insert(name.to_string(), Tensor { shape, data });
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    /// An `f64` tensor whose shape must equal `shape`.
    pub fn f64(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape.clone(),
            });
        }
        match &t.data {
            TensorData::F64(v) => Ok(v),
            _ => Err(Error::MissingTensor(format!("{name} (f64)"))),
        }
    }

    /// An `f64` tensor of any shape.
    pub fn f64_any(&self, name: &str) -> Result<(&[usize], &[f64])> {
        let t = self.get(name)?;
        match &t.data {
            TensorData::F64(v) => Ok((&t.shape, v)),
            _ => Err(Error::MissingTensor(format!("{name} (f64)"))),
        }
    }

    pub fn u64(&self, name: &str) -> Result<&[u64]> {
        match &self.get(name)?.data {
            TensorData::U64(v) => Ok(v),
            _ => Err(Error::MissingTensor(format!("{name} (u64)"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match &self.get(name)?.data {
            TensorData::Utf8(s) => Ok(s),
            _ => Err(Error::MissingTensor(format!("{name} (utf8)"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = String::new();
        let mut offset = 0;
        for (name, t) in &self.tensors {
            let shape: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            let len = t.data.byte_len();
            manifest.push_str(&format!("{name}\t{}\t{}\t{offset}\t{len}\n", shape.join(","), t.data.dtype()));
            offset += len;
        }
        let mut out = Vec::with_capacity(20 + manifest.len() + offset);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for t in self.tensors.values() {
            t.data.write(&mut out);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::UnknownHeader);
        }
        if bytes.len() < MAGIC.len() + 12 {
            return Err(Error::Parse {
                line: 0,
                message: "truncated container".into(),
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let manifest_len = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
        let bad = |line: usize, message: String| Error::Parse { line, message };
        let manifest_end = 16usize
            .checked_add(manifest_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| bad(0, "manifest overruns container".into()))?;
        let manifest =
            std::str::from_utf8(&body[16..manifest_end]).map_err(|_| bad(0, "manifest is not UTF-8".into()))?;
        let data = &body[manifest_end..];

        let mut tensors = BTreeMap::new();
        for (i, line) in manifest.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let [name, shape, dtype, offset, len] = fields[..] else {
                return Err(bad(i + 1, format!("expected 5 fields, found {}", fields.len())));
            };
            let shape: Vec<usize> = if shape.is_empty() {
                Vec::new()
            } else {
                shape
                    .split(',')
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(i + 1, format!("bad shape {shape:?}")))?
            };
            let offset: usize = offset.parse().map_err(|_| bad(i + 1, "bad offset".into()))?;
            let len: usize = len.parse().map_err(|_| bad(i + 1, "bad length".into()))?;
            let raw = offset
                .checked_add(len)
                .and_then(|end| data.get(offset..end))
                .ok_or_else(|| bad(i + 1, format!("tensor {name} overruns data")))?;
            let elems: usize = shape.iter().product();
            let data = match dtype {
                "f64" | "u64" => {
                    if elems * 8 != len {
                        return Err(Error::ShapeMismatch {
                            name: name.to_string(),
                            expected: shape,
                            found: vec![len / 8],
                        });
                    }
                    let words = raw.chunks_exact(8).map(|c| c.try_into().expect("8 bytes"));
                    if dtype == "f64" {
                        TensorData::F64(words.map(f64::from_le_bytes).collect())
                    } else {
                        TensorData::U64(words.map(u64::from_le_bytes).collect())
                    }
                }
                "utf8" => {
                    if shape != [len] {
                        return Err(Error::ShapeMismatch {
                            name: name.to_string(),
                            expected: shape,
                            found: vec![len],
                        });
                    }
                    let s = std::str::from_utf8(raw).map_err(|_| bad(i + 1, format!("tensor {name} is not UTF-8")))?;
                    TensorData::Utf8(s.to_string())
                }
                other => return Err(bad(i + 1, format!("unknown dtype {other:?}"))),
            };
            tensors.insert(name.to_string(), Tensor { shape, data });
        }
        Ok(Container { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).with_path(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).with_path(path)?)
    }

    /// True when `bytes` starts with the container magic.
    pub fn sniff(bytes: &[u8]) -> bool {
        bytes.starts_with(&MAGIC)
    }
}

/// Simple `key=value` metadata stored as a text tensor.
pub fn encode_meta(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn decode_meta(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
