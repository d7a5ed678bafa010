//! Key-value binary checkpoints shared by every model.
//!
//! Layout, little-endian:
//!
//! ```text
//! b"LSTC"  u32 version (=1)
//! u32 header_len, header_len bytes of UTF-8 `key = value` lines
//! u32 n_tensors
//! per tensor: u32 name_len, name (UTF-8), u32 ndim, ndim x u32 extents,
//!             prod(extents) x f64 values (row-major)
//! ```

use std::path::Path;

use crate::corpus::text::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LSTC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointFile {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl CheckpointFile {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.header.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::format("checkpoint", format!("missing header key {key}")))?;
        raw.parse()
            .map_err(|_| Error::format("checkpoint", format!("bad value for {key}: {raw}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor {name}")))
    }

    pub fn add_params(&mut self, prefix: &str, store: &ParamStore) {
        for (_, name, t) in store.iter() {
            self.tensors.push((format!("{prefix}{name}"), t.clone()));
        }
    }

    /// Overwrites every parameter of `store` from tensors named `{prefix}{name}`.
    pub fn load_params(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        for id in store.ids().collect::<Vec<_>>() {
            let name = format!("{prefix}{}", store.name(id));
            let t = self.tensor(&name)?;
            if t.shape() != store.get(id).shape() {
                return Err(Error::format(
                    "checkpoint",
                    format!("{name} has shape {:?}, expected {:?}", t.shape(), store.get(id).shape()),
                ));
            }
            store.set(id, t.clone());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let header: String = self.header.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        push_bytes(&mut out, header.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            push_bytes(&mut out, name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "missing LSTC magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header_text = std::str::from_utf8(r.take(header_len)?)
            .map_err(|_| Error::format("checkpoint", "header is not UTF-8"))?;
        let mut header = Vec::new();
        for line in header_text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::format("checkpoint", format!("bad header line {line:?}")))?;
            header.push((k.to_string(), v.to_string()));
        }
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let data = r
                .take(count * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::new(shape, data).map_err(|e| Error::format("checkpoint", e.to_string()))?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(CheckpointFile { header, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
    }
}

fn push_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("checkpoint", "truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let mut ck = CheckpointFile::default();
        ck.set("kind", "test");
        ck.set("epoch", 3);
        ck.tensors.push(("w".into(), Tensor::matrix(2, 2, vec![1.0, -2.0, 3.5, f64::MIN_POSITIVE])));
        let bytes = ck.to_bytes();
        let back = CheckpointFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.require::<usize>("epoch").unwrap(), 3);
        assert!(CheckpointFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(CheckpointFile::from_bytes(b"nope").is_err());
    }
}
