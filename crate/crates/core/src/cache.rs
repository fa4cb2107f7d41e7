//! Binary container of id-keyed, fixed-dimension `f32` vectors.
//!
//! ```text
//! header: "MTAS" | u32 version (=1) | u32 dim | u32 rows      (little endian)
//! row:    u32 id_len | id (UTF-8) | dim × f32
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::error::{CacheError, Error, Result};

pub const CACHE_MAGIC: [u8; 4] = *b"MTAS";
pub const CACHE_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    dim: usize,
    ids: Vec<String>,
    values: Vec<f32>,
    index: HashMap<String, usize>,
}

impl FeatureCache {
    pub fn new(dim: usize) -> Self {
        FeatureCache {
            dim,
            ids: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn push(&mut self, id: impl Into<String>, row: &[f32]) -> Result<(), CacheError> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(CacheError::RowDimension {
                id,
                expected: self.dim,
                found: row.len(),
            });
        }
        if u32::try_from(id.len()).is_err() {
            return Err(CacheError::Overflow("id length"));
        }
        if self.index.contains_key(&id) {
            return Err(CacheError::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.extend_from_slice(row);
        Ok(())
    }

    /// Narrowing push; values that overflow `f32` are rejected.
    pub fn push_f64(&mut self, id: impl Into<String>, row: &[f64]) -> Result<()> {
        let id = id.into();
        let narrowed: Vec<f32> = row.iter().map(|&v| v as f32).collect();
        if narrowed.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cache row {id:?}")));
        }
        Ok(self.push(id, &narrowed)?)
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn get_f64(&self, id: &str) -> Option<Vec<f64>> {
        self.get(id).map(|r| r.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), self.row(i)))
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.ids.iter().map(|id| 4 + id.len() + 4 * self.dim).sum::<usize>()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CacheError> {
        let dim = u32::try_from(self.dim).map_err(|_| CacheError::Overflow("dim"))?;
        let rows = u32::try_from(self.ids.len()).map_err(|_| CacheError::Overflow("row count"))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&dim.to_le_bytes());
        out.extend_from_slice(&rows.to_le_bytes());
        for (id, row) in self.iter() {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Decode a whole buffer; bytes past the declared rows are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CacheError> {
        let (cache, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(CacheError::TrailingBytes(bytes.len() - used));
        }
        Ok(cache)
    }

    /// Decode one container from the front of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize), CacheError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "header")?.try_into().expect("4 bytes");
        if magic != CACHE_MAGIC {
            return Err(CacheError::BadMagic(magic));
        }
        let version = r.u32("header")?;
        if version != CACHE_VERSION {
            return Err(CacheError::Version(version));
        }
        let dim = r.u32("header")? as usize;
        let rows = r.u32("header")? as usize;
        let mut cache = FeatureCache::new(dim);
        let mut row = vec![0f32; dim];
        for n in 0..rows {
            let what = || format!("row {n} of {rows}");
            let id_len = r.u32(&what())? as usize;
            let id = std::str::from_utf8(r.take(id_len, &what())?)
                .map_err(|_| CacheError::InvalidId)?
                .to_owned();
            let raw = r.take(4 * dim, &what())?;
            for (v, chunk) in row.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
            cache.push(id, &row)?;
        }
        Ok((cache, r.pos))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CacheError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(CacheError::Truncated(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}
