//! Flat key→array container backing checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"GEOCKPT1"
//! u32 meta_count   { u32 key_len, key, u32 val_len, val }*
//! u32 tensor_count { u32 name_len, name, u64 len, f64 bits* }*
//! ```
//!
//! Entries are written in key order, so equal stores serialize to equal bytes.

use std::collections::BTreeMap;

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"GEOCKPT1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    meta: BTreeMap<String, String>,
    tensors: BTreeMap<String, Vec<f64>>,
}

impl ParamStore {
    pub fn insert(&mut self, name: &str, values: Vec<f64>) {
        self.tensors.insert(name.to_string(), values);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.tensors.get(name).map(Vec::as_slice)
    }

    pub fn set_meta(&mut self, key: &str, value: &str) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            write_str(&mut out, k);
            write_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (k, v) in &self.tensors {
            write_str(&mut out, k);
            out.extend_from_slice(&(v.len() as u64).to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a geocon checkpoint (bad magic)".into()));
        }
        let mut store = ParamStore::default();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            store.meta.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let n = r.u64()? as usize;
            if n > (bytes.len() - r.pos) / 8 {
                return Err(Error::Format(format!("tensor {k} overruns the file")));
            }
            let v = (0..n)
                .map(|_| r.u64().map(f64::from_bits))
                .collect::<Result<Vec<_>>>()?;
            store.tensors.insert(k, v);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(store)
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("checkpoint key is not UTF-8".into()))
    }
}
