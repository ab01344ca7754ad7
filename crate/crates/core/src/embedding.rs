//! Embedding vectors keyed by string id, the `EMB1` binary format, and
//! cosine similarity.
//!
//! Layout of an `EMB1` file, all integers little-endian:
//!
//! ```text
//! "EMB1" | dim: u32 | count: u64 | flags: u8 (bit 0 = normalized)
//!        | count x (len: u16, utf-8 bytes)   id table
//!        | count x dim x f32                 row-major payload
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
const FLAG_NORMALIZED: u8 = 1;

/// Tolerance on the Euclidean norm of vectors in a normalized set.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic bytes, expected {expected:?}")]
    BadMagic { expected: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("truncated file while reading {0}")]
    TruncatedFile(&'static str),
    #[error("duplicate embedding id {0:?}")]
    DuplicateId(String),
    #[error("unknown embedding id {0:?}")]
    UnknownId(String),
    #[error("zero vector for id {0:?}")]
    ZeroVector(String),
    #[error("embedding set is not normalized")]
    NotNormalized,
    #[error("vector {id:?} has norm {norm} but the set is flagged normalized")]
    NormViolation { id: String, norm: f64 },
    #[error("id {0:?} is not valid utf-8 or exceeds 65535 bytes")]
    BadId(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Encodes an id table: per entry a u16 LE byte length then the UTF-8 bytes.
pub(crate) fn encode_id_table(ids: &[String], out: &mut Vec<u8>) -> Result<(), EmbeddingError> {
    for id in ids {
        let len = u16::try_from(id.len()).map_err(|_| EmbeddingError::BadId(id.clone()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    Ok(())
}

/// Little-endian cursor over a byte buffer.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], EmbeddingError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(EmbeddingError::TruncatedFile(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &'static str) -> Result<u8, EmbeddingError> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &'static str) -> Result<u16, EmbeddingError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> Result<u32, EmbeddingError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &'static str) -> Result<u64, EmbeddingError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn id_table(&mut self, count: usize) -> Result<Vec<String>, EmbeddingError> {
        // Each entry takes at least two bytes; refuse absurd counts early.
        if count > self.remaining() / 2 {
            return Err(EmbeddingError::TruncatedFile("id table"));
        }
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let len = self.u16("id length")? as usize;
            let bytes = self.take(len, "id bytes")?;
            let id = std::str::from_utf8(bytes)
                .map_err(|_| EmbeddingError::BadId(String::from_utf8_lossy(bytes).into_owned()))?;
            ids.push(id.to_owned());
        }
        Ok(ids)
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &'static str) -> Result<Vec<f32>, EmbeddingError> {
        let bytes = self.take(n.checked_mul(4).ok_or(EmbeddingError::TruncatedFile(what))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, EmbeddingError> {
    fs::read(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EmbeddingError> {
    let io = |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.flush().map_err(io)
}

/// Fixed-dimension vectors indexed by unique string ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingSet {
    /// Builds a set from `(id, vector)` rows. `normalized` is a claim that is
    /// checked against [`UNIT_NORM_TOLERANCE`].
    pub fn from_rows<I, S>(dim: usize, rows: I, normalized: bool) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, v) in rows {
            let id = id.into();
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch(format!(
                    "vector {id:?} has {} components, expected {dim}",
                    v.len()
                )));
            }
            ids.push(id);
            data.extend_from_slice(&v);
        }
        Self::from_parts(dim, ids, data, normalized)
    }

    fn from_parts(
        dim: usize,
        ids: Vec<String>,
        data: Vec<f32>,
        normalized: bool,
    ) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::DimensionMismatch("dim must be positive".into()));
        }
        debug_assert_eq!(data.len(), ids.len() * dim);
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if u16::try_from(id.len()).is_err() {
                return Err(EmbeddingError::BadId(id.clone()));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(EmbeddingError::DuplicateId(id.clone()));
            }
        }
        let set = EmbeddingSet {
            dim,
            ids,
            index,
            data,
            normalized,
        };
        if normalized {
            for i in 0..set.len() {
                let norm = l2_norm(set.row(i));
                if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                    return Err(EmbeddingError::NormViolation {
                        id: set.ids[i].clone(),
                        norm,
                    });
                }
            }
        }
        Ok(set)
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

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    /// Row-major payload.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Keeps only the listed ids, in the order given.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<EmbeddingSet, EmbeddingError> {
        let mut out_ids = Vec::with_capacity(ids.len());
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let id = id.as_ref();
            let i = self
                .position(id)
                .ok_or_else(|| EmbeddingError::UnknownId(id.to_owned()))?;
            out_ids.push(id.to_owned());
            data.extend_from_slice(self.row(i));
        }
        Self::from_parts(self.dim, out_ids, data, self.normalized)
    }

    /// Scales every vector to unit Euclidean norm.
    pub fn normalize(&self) -> Result<EmbeddingSet, EmbeddingError> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, id) in self.ids.iter().enumerate() {
            let row = self.row(i);
            let norm = l2_norm(row);
            if norm == 0.0 || !norm.is_finite() {
                return Err(EmbeddingError::ZeroVector(id.clone()));
            }
            data.extend(row.iter().map(|&x| (x as f64 / norm) as f32));
        }
        Ok(EmbeddingSet {
            dim: self.dim,
            ids: self.ids.clone(),
            index: self.index.clone(),
            data,
            normalized: true,
        })
    }

    /// Cosine similarity of two stored unit vectors.
    pub fn cosine(&self, id_a: &str, id_b: &str) -> Result<f64, EmbeddingError> {
        if !self.normalized {
            return Err(EmbeddingError::NotNormalized);
        }
        let a = self
            .get(id_a)
            .ok_or_else(|| EmbeddingError::UnknownId(id_a.to_owned()))?;
        let b = self
            .get(id_b)
            .ok_or_else(|| EmbeddingError::UnknownId(id_b.to_owned()))?;
        Ok(unit_cosine(a, b))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, EmbeddingError> {
        let dim = u32::try_from(self.dim)
            .map_err(|_| EmbeddingError::DimensionMismatch("dim exceeds u32".into()))?;
        let mut out = Vec::with_capacity(17 + self.ids.len() * 8 + self.data.len() * 4);
        out.extend_from_slice(EMB_MAGIC);
        out.extend_from_slice(&dim.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        out.push(if self.normalized { FLAG_NORMALIZED } else { 0 });
        encode_id_table(&self.ids, &mut out)?;
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EmbeddingSet, EmbeddingError> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4, "magic").map_err(|_| EmbeddingError::BadMagic {
            expected: "EMB1".into(),
        })?;
        if magic != EMB_MAGIC {
            return Err(EmbeddingError::BadMagic {
                expected: "EMB1".into(),
            });
        }
        let dim = r.u32("dim")? as usize;
        let count = usize::try_from(r.u64("count")?)
            .map_err(|_| EmbeddingError::TruncatedFile("count"))?;
        let flags = r.u8("flags")?;
        if dim == 0 {
            return Err(EmbeddingError::DimensionMismatch("dim must be positive".into()));
        }
        let ids = r.id_table(count)?;
        let n = count
            .checked_mul(dim)
            .ok_or(EmbeddingError::TruncatedFile("payload"))?;
        let data = r.f32s(n, "payload")?;
        if r.remaining() != 0 {
            return Err(EmbeddingError::DimensionMismatch(format!(
                "{} trailing bytes after {count} x {dim} payload",
                r.remaining()
            )));
        }
        Self::from_parts(dim, ids, data, flags & FLAG_NORMALIZED != 0)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet, EmbeddingError> {
    EmbeddingSet::from_bytes(&read_file(path.as_ref())?)
}

pub fn store_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    write_file(path.as_ref(), &set.to_bytes()?)
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

/// Dot product accumulated in f64 over four interleaved lanes, clamped to
/// [-1, 1]. Symmetric in its arguments bit for bit.
#[inline]
pub fn unit_cosine(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    for (x, y) in ca.zip(cb) {
        for lane in 0..4 {
            acc[lane] += x[lane] as f64 * y[lane] as f64;
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail).clamp(-1.0, 1.0)
}
