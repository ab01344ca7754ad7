//! Row-compressed top-k similarity matrices and the `STK1` file format.
//!
//! ```text
//! "STK1" | n_rows: u64 | n_cols: u64 | k: u32
//!        | row_offsets: (n_rows + 1) x u64
//!        | col_ids: nnz x u64 | values: nnz x f32
//! ```
//!
//! Row and column ids live in a sidecar file next to the matrix
//! (`<matrix>.ids`): `"IDS1" | n_rows: u64 | row id table | n_cols: u64 |
//! col id table`, id tables encoded as in `EMB1`.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::AssignmentError;
use crate::embedding::{
    encode_id_table, read_file, unit_cosine, write_file, EmbeddingError, EmbeddingSet, Reader,
};

pub const STK_MAGIC: &[u8; 4] = b"STK1";
pub const IDS_MAGIC: &[u8; 4] = b"IDS1";

/// Candidates kept per anchor unless configured otherwise.
pub const DEFAULT_K: usize = 1000;

/// Sparse anchor x candidate similarities, at most `k` entries per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTopKMatrix {
    n_rows: usize,
    n_cols: usize,
    k: usize,
    row_offsets: Vec<usize>,
    col_ids: Vec<usize>,
    values: Vec<f32>,
}

/// Descending value, then ascending column.
fn entry_order(a: &(usize, f32), b: &(usize, f32)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl SparseTopKMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Rows are sorted
    /// into canonical order; invariants are validated.
    pub fn from_rows(
        n_cols: usize,
        k: usize,
        rows: Vec<Vec<(usize, f32)>>,
    ) -> Result<Self, AssignmentError> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let mut col_ids = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by(entry_order);
            if row.len() > k {
                return Err(AssignmentError::InvalidMatrix(format!(
                    "row {i} has {} entries, cap is {k}",
                    row.len()
                )));
            }
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(AssignmentError::InvalidMatrix(format!(
                        "row {i} repeats column {}",
                        w[0].0
                    )));
                }
            }
            for (c, v) in row {
                col_ids.push(c);
                values.push(v);
            }
            row_offsets.push(col_ids.len());
        }
        let m = SparseTopKMatrix {
            n_rows: row_offsets.len() - 1,
            n_cols,
            k,
            row_offsets,
            col_ids,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Dense matrix with every entry stored.
    pub fn from_dense(values: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let n_cols = values.first().map_or(0, Vec::len);
        let rows = values
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, &v)| (j, v as f32)).collect())
            .collect();
        Self::from_rows(n_cols, n_cols.max(1), rows)
    }

    fn validate(&self) -> Result<(), AssignmentError> {
        let bad = |msg: String| Err(AssignmentError::InvalidMatrix(msg));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if self.row_offsets.len() != self.n_rows + 1 || self.row_offsets[0] != 0 {
            return bad("row_offsets length or origin".into());
        }
        if *self.row_offsets.last().unwrap() != self.col_ids.len()
            || self.col_ids.len() != self.values.len()
        {
            return bad("entry count disagrees with row_offsets".into());
        }
        for i in 0..self.n_rows {
            let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if e < s {
                return bad(format!("row_offsets decrease at row {i}"));
            }
            if e - s > self.k {
                return bad(format!("row {i} exceeds k = {}", self.k));
            }
            let row: Vec<(usize, f32)> = self.row(i).collect();
            for &(c, v) in &row {
                if c >= self.n_cols {
                    return bad(format!("row {i} column {c} >= n_cols {}", self.n_cols));
                }
                if !(-1.0..=1.0).contains(&v) {
                    return bad(format!("row {i} value {v} outside [-1, 1]"));
                }
            }
            if row.windows(2).any(|w| entry_order(&w[0], &w[1]) != Ordering::Less) {
                return bad(format!("row {i} is not in descending-value order"));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_ids(&self) -> &[usize] {
        &self.col_ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// `(column, value)` entries of row `i`, best first.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f32)> + '_ {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.col_ids[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f32> {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(28 + 8 * self.row_offsets.len() + 12 * self.values.len());
        out.extend_from_slice(STK_MAGIC);
        out.extend_from_slice(&(self.n_rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_cols as u64).to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        for &o in &self.row_offsets {
            out.extend_from_slice(&(o as u64).to_le_bytes());
        }
        for &c in &self.col_ids {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AssignmentError> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4, "magic").map_err(|_| bad_magic("STK1"))?;
        if magic != STK_MAGIC {
            return Err(bad_magic("STK1").into());
        }
        let n_rows = to_usize(r.u64("n_rows")?)?;
        let n_cols = to_usize(r.u64("n_cols")?)?;
        let k = r.u32("k")? as usize;
        if n_rows > r.remaining() / 8 {
            return Err(EmbeddingError::TruncatedFile("row_offsets").into());
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        for _ in 0..=n_rows {
            row_offsets.push(to_usize(r.u64("row_offsets")?)?);
        }
        let nnz = *row_offsets.last().unwrap();
        if nnz > r.remaining() / 12 {
            return Err(EmbeddingError::TruncatedFile("entries").into());
        }
        let mut col_ids = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            col_ids.push(to_usize(r.u64("col_ids")?)?);
        }
        let values = r.f32s(nnz, "values")?;
        if r.remaining() != 0 {
            return Err(AssignmentError::InvalidMatrix(format!(
                "{} trailing bytes",
                r.remaining()
            )));
        }
        let m = SparseTopKMatrix {
            n_rows,
            n_cols,
            k,
            row_offsets,
            col_ids,
            values,
        };
        m.validate()?;
        Ok(m)
    }
}

fn bad_magic(expected: &str) -> EmbeddingError {
    EmbeddingError::BadMagic {
        expected: expected.into(),
    }
}

fn to_usize(x: u64) -> Result<usize, EmbeddingError> {
    usize::try_from(x).map_err(|_| EmbeddingError::TruncatedFile("index exceeds usize"))
}

/// Row and column ids accompanying a matrix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatrixIds {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
}

impl MatrixIds {
    pub fn to_bytes(&self) -> Result<Vec<u8>, EmbeddingError> {
        let mut out = Vec::new();
        out.extend_from_slice(IDS_MAGIC);
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        encode_id_table(&self.rows, &mut out)?;
        out.extend_from_slice(&(self.cols.len() as u64).to_le_bytes());
        encode_id_table(&self.cols, &mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic").map_err(|_| bad_magic("IDS1"))? != IDS_MAGIC {
            return Err(bad_magic("IDS1"));
        }
        let n_rows = to_usize(r.u64("row count")?)?;
        let rows = r.id_table(n_rows)?;
        let n_cols = to_usize(r.u64("col count")?)?;
        let cols = r.id_table(n_cols)?;
        if r.remaining() != 0 {
            return Err(EmbeddingError::DimensionMismatch("trailing bytes in id sidecar".into()));
        }
        Ok(MatrixIds { rows, cols })
    }
}

/// Sidecar path holding the id tables of the matrix at `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

/// Writes the matrix and, when given, its id sidecar.
pub fn store_topk(
    m: &SparseTopKMatrix,
    ids: Option<&MatrixIds>,
    path: impl AsRef<Path>,
) -> Result<(), AssignmentError> {
    let path = path.as_ref();
    if let Some(ids) = ids {
        if ids.rows.len() != m.n_rows() || ids.cols.len() != m.n_cols() {
            return Err(AssignmentError::InvalidMatrix(format!(
                "id tables {}x{} do not match matrix {}x{}",
                ids.rows.len(),
                ids.cols.len(),
                m.n_rows(),
                m.n_cols()
            )));
        }
        write_file(&sidecar_path(path), &ids.to_bytes()?)?;
    }
    write_file(path, &m.to_bytes())?;
    Ok(())
}

pub fn load_topk(path: impl AsRef<Path>) -> Result<SparseTopKMatrix, AssignmentError> {
    SparseTopKMatrix::from_bytes(&read_file(path.as_ref())?)
}

/// Loads the id sidecar of the matrix at `path`.
pub fn load_matrix_ids(path: impl AsRef<Path>) -> Result<MatrixIds, AssignmentError> {
    Ok(MatrixIds::from_bytes(&read_file(&sidecar_path(path.as_ref()))?)?)
}

/// The `k` best `(column, value)` entries of one dense similarity row.
pub fn top_k_of_row(sims: impl IntoIterator<Item = f32>, k: usize) -> Vec<(usize, f32)> {
    let mut entries: Vec<(usize, f32)> = sims.into_iter().enumerate().collect();
    if entries.len() > k {
        entries.select_nth_unstable_by(k - 1, entry_order);
        entries.truncate(k);
        // the scan buffer is as long as the candidate set
        entries.shrink_to_fit();
    }
    entries.sort_by(entry_order);
    entries
}

/// Exact top-k cosines of every anchor against every candidate by full scan.
/// Rows are computed in parallel; the result does not depend on thread count.
pub fn build_topk(
    anchors: &EmbeddingSet,
    candidates: &EmbeddingSet,
    k: usize,
) -> Result<SparseTopKMatrix, AssignmentError> {
    if anchors.dim() != candidates.dim() {
        return Err(AssignmentError::DimensionMismatch {
            anchors: anchors.dim(),
            candidates: candidates.dim(),
        });
    }
    if !anchors.is_normalized() || !candidates.is_normalized() {
        return Err(EmbeddingError::NotNormalized.into());
    }
    if k == 0 {
        return Err(AssignmentError::InvalidMatrix("k must be positive".into()));
    }
    let n_cols = candidates.len();
    let rows: Vec<Vec<(usize, f32)>> = (0..anchors.len())
        .into_par_iter()
        .map(|i| {
            let a = anchors.row(i);
            top_k_of_row((0..n_cols).map(|j| unit_cosine(a, candidates.row(j)) as f32), k)
        })
        .collect();
    let m = SparseTopKMatrix::from_rows(n_cols, k, rows)?;
    log::info!(
        "topk: {} anchors x {} candidates, k = {}, {} entries",
        m.n_rows(),
        m.n_cols(),
        k,
        m.nnz()
    );
    Ok(m)
}
