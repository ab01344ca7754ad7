//! Top-k sparsified similarity between an anchor set and a candidate pool,
//! and one-to-one selection of candidates by maximum total similarity.

mod oracle;
mod solver;
pub mod topk;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::embedding::EmbeddingError;
use crate::manifest::{Manifest, PairRecord};

pub use oracle::{dense_oracle, ORACLE_MAX_SIDE};
pub use solver::solve_sparse_assignment;
pub use topk::{
    build_topk, load_matrix_ids, load_topk, sidecar_path, store_topk, top_k_of_row, MatrixIds,
    SparseTopKMatrix, DEFAULT_K,
};

#[derive(Debug, Error)]
pub enum AssignmentError {
    #[error("no row-perfect matching exists; rows {rows:?} share too few stored columns")]
    NoPerfectMatching { rows: Vec<usize> },
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("{rows} rows exceed {cols} columns")]
    MoreRowsThanColumns { rows: usize, cols: usize },
    #[error("{rows}x{cols} is too large for exhaustive search")]
    TooLarge { rows: usize, cols: usize },
    #[error("anchor dim {anchors} differs from candidate dim {candidates}")]
    DimensionMismatch { anchors: usize, candidates: usize },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("assignment references unknown column {0}")]
    UnknownColumn(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Injective row -> column map and the total similarity it collects.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column per row; `None` only for rows listed in `unmatched`.
    pub mapping: Vec<Option<usize>>,
    /// Sum of the selected values in row order.
    pub total: f64,
    pub unmatched: Vec<usize>,
}

impl Assignment {
    pub(crate) fn from_mapping(
        m: &SparseTopKMatrix,
        mapping: Vec<Option<usize>>,
    ) -> Result<Self, AssignmentError> {
        let mut total = 0.0;
        let mut unmatched = Vec::new();
        for (i, c) in mapping.iter().enumerate() {
            match c {
                Some(j) => {
                    let v = m.get(i, *j).ok_or_else(|| {
                        AssignmentError::InvalidMatrix(format!("row {i} assigned to absent entry {j}"))
                    })?;
                    total += v as f64;
                }
                None => unmatched.push(i),
            }
        }
        Ok(Assignment {
            mapping,
            total,
            unmatched,
        })
    }

    pub fn matched(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mapping
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|c| (i, c)))
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = HashSet::new();
        self.matched().all(|(_, c)| seen.insert(c))
    }
}

/// The candidate records chosen by an assignment, sorted by pair_id.
/// `column_ids[j]` is the candidate pair_id of column `j`.
pub fn select_matched_subset(
    candidates: &Manifest,
    a: &Assignment,
    column_ids: &[String],
) -> Result<Manifest, AssignmentError> {
    let by_id: HashMap<&str, &PairRecord> =
        candidates.records.iter().map(|r| (r.pair_id.as_str(), r)).collect();
    let mut records = Vec::with_capacity(a.mapping.len());
    for (_, col) in a.matched() {
        let id = column_ids
            .get(col)
            .ok_or_else(|| AssignmentError::UnknownColumn(format!("index {col}")))?;
        let r = by_id
            .get(id.as_str())
            .ok_or_else(|| AssignmentError::UnknownColumn(id.clone()))?;
        records.push((*r).clone());
    }
    records.sort_by(|x, y| x.pair_id.cmp(&y.pair_id));
    Ok(Manifest {
        records,
        provenance: format!(
            "match: {} selected, {} unmatched anchors, total similarity {}",
            a.mapping.len() - a.unmatched.len(),
            a.unmatched.len(),
            a.total
        ),
    })
}
