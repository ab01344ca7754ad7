//! Maximum-similarity one-to-one assignment on a sparse top-k matrix.
//!
//! Successive shortest augmenting paths: each row in turn is connected to a
//! free column by a Dijkstra search over reduced costs, with row and column
//! potentials kept in f64. Edge cost is `1 - similarity`, so all costs start
//! non-negative and the initial zero potentials are dual feasible. Only
//! stored entries are edges.
//!
//! When unmatched rows are allowed, every row also gets a private fallback
//! column priced above any possible difference in real cost, which makes the
//! minimum-cost solution a maximum-cardinality matching first and a
//! maximum-similarity one second.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::topk::SparseTopKMatrix;
use super::{Assignment, AssignmentError};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    col: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // BinaryHeap is a max-heap; invert so the smallest distance, then the
    // smallest column, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.col.cmp(&self.col))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Solver<'a> {
    m: &'a SparseTopKMatrix,
    /// Cost of a row's fallback column; `None` when every row must match.
    fallback_cost: Option<f64>,
    row_pot: Vec<f64>,
    col_pot: Vec<f64>,
    col_for_row: Vec<usize>,
    row_for_col: Vec<usize>,
    // per-search scratch, reset through `touched`
    dist: Vec<f64>,
    pred: Vec<usize>,
    done: Vec<bool>,
    touched: Vec<usize>,
    heap: BinaryHeap<Frontier>,
    scanned_rows: Vec<usize>,
    scanned_cols: Vec<usize>,
}

impl<'a> Solver<'a> {
    fn new(m: &'a SparseTopKMatrix, allow_unmatched: bool) -> Self {
        let n_rows = m.n_rows();
        // Real costs lie in [0, 2]; any matching's real cost is within 2n of
        // any other's, so one extra fallback must cost more than that.
        let fallback_cost = allow_unmatched.then_some(2.0 * n_rows as f64 + 3.0);
        let total_cols = m.n_cols() + if allow_unmatched { n_rows } else { 0 };
        Solver {
            m,
            fallback_cost,
            row_pot: vec![0.0; n_rows],
            col_pot: vec![0.0; total_cols],
            col_for_row: vec![NONE; n_rows],
            row_for_col: vec![NONE; total_cols],
            dist: vec![f64::INFINITY; total_cols],
            pred: vec![NONE; total_cols],
            done: vec![false; total_cols],
            touched: Vec::new(),
            heap: BinaryHeap::new(),
            scanned_rows: Vec::new(),
            scanned_cols: Vec::new(),
        }
    }

    fn relax(&mut self, row: usize, base: f64) {
        let m = self.m;
        let fallback = self
            .fallback_cost
            .map(|c| (m.n_cols() + row, c));
        let real = m.row(row).map(|(j, v)| (j, 1.0 - v as f64));
        for (col, cost) in real.chain(fallback) {
            if self.done[col] {
                continue;
            }
            let reduced = base + cost - self.row_pot[row] - self.col_pot[col];
            if reduced < self.dist[col] {
                if self.dist[col] == f64::INFINITY {
                    self.touched.push(col);
                }
                self.dist[col] = reduced;
                self.pred[col] = row;
                self.heap.push(Frontier { dist: reduced, col });
            }
        }
    }

    /// Shortest augmenting path from `start`; returns the free column it ends
    /// at and the path length, or `None` when no augmenting path exists.
    fn search(&mut self, start: usize) -> Option<(usize, f64)> {
        let mut row = start;
        let mut base = 0.0;
        loop {
            self.scanned_rows.push(row);
            self.relax(row, base);
            let next = loop {
                match self.heap.pop() {
                    None => break None,
                    Some(f) if self.done[f.col] || f.dist > self.dist[f.col] => continue,
                    Some(f) => break Some(f),
                }
            };
            let Frontier { dist, col } = next?;
            base = dist;
            self.done[col] = true;
            self.scanned_cols.push(col);
            match self.row_for_col[col] {
                NONE => return Some((col, base)),
                r => row = r,
            }
        }
    }

    fn reset_scratch(&mut self) {
        for &c in &self.touched {
            self.dist[c] = f64::INFINITY;
            self.pred[c] = NONE;
            self.done[c] = false;
        }
        self.touched.clear();
        self.heap.clear();
        self.scanned_rows.clear();
        self.scanned_cols.clear();
    }

    fn augment_row(&mut self, start: usize) -> Result<(), AssignmentError> {
        let Some((sink, len)) = self.search(start) else {
            // scanned rows only reach scanned columns, all matched to the
            // other scanned rows: a Hall violator
            let mut rows = self.scanned_rows.clone();
            rows.sort_unstable();
            self.reset_scratch();
            return Err(AssignmentError::NoPerfectMatching { rows });
        };
        self.row_pot[start] += len;
        for &r in &self.scanned_rows {
            if r != start {
                self.row_pot[r] += len - self.dist[self.col_for_row[r]];
            }
        }
        for &c in &self.scanned_cols {
            self.col_pot[c] -= len - self.dist[c];
        }
        let mut col = sink;
        loop {
            let row = self.pred[col];
            self.row_for_col[col] = row;
            let prev = std::mem::replace(&mut self.col_for_row[row], col);
            if row == start {
                break;
            }
            col = prev;
        }
        self.reset_scratch();
        Ok(())
    }
}

/// Solves the sparse rectangular assignment maximizing total similarity over
/// stored entries.
///
/// With `allow_unmatched` false every row must be matched, otherwise
/// [`AssignmentError::NoPerfectMatching`] names a set of rows whose stored
/// columns are too few. With it true the result has maximum cardinality and,
/// among those, maximum total; unmatched rows are listed.
pub fn solve_sparse_assignment(
    m: &SparseTopKMatrix,
    allow_unmatched: bool,
) -> Result<Assignment, AssignmentError> {
    if m.n_rows() == 0 || m.n_cols() == 0 {
        return Err(AssignmentError::EmptyMatrix);
    }
    if m.n_rows() > m.n_cols() {
        return Err(AssignmentError::MoreRowsThanColumns {
            rows: m.n_rows(),
            cols: m.n_cols(),
        });
    }
    let mut solver = Solver::new(m, allow_unmatched);
    for row in 0..m.n_rows() {
        solver.augment_row(row)?;
    }
    let n_cols = m.n_cols();
    let mapping: Vec<Option<usize>> = solver
        .col_for_row
        .iter()
        .map(|&c| (c < n_cols).then_some(c))
        .collect();
    Assignment::from_mapping(m, mapping)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_two_by_two() {
        let m = SparseTopKMatrix::from_dense(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let a = solve_sparse_assignment(&m, false).unwrap();
        assert_eq!(a.mapping, vec![Some(0), Some(1)]);
        assert!((a.total - 1.7).abs() < 1e-6);
    }

    #[test]
    fn pigeonhole_fails() {
        let m = SparseTopKMatrix::from_rows(2, 2, vec![vec![(0, 0.5)], vec![(0, 0.7)]]).unwrap();
        match solve_sparse_assignment(&m, false) {
            Err(AssignmentError::NoPerfectMatching { rows }) => assert_eq!(rows, vec![0, 1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unmatched_mode_prefers_heavier_row() {
        let m = SparseTopKMatrix::from_rows(2, 2, vec![vec![(0, 0.125)], vec![(0, 0.875)]]).unwrap();
        let a = solve_sparse_assignment(&m, true).unwrap();
        assert_eq!(a.mapping, vec![None, Some(0)]);
        assert_eq!(a.unmatched, vec![0]);
        assert_eq!(a.total, 0.875);
    }

    #[test]
    fn unmatched_mode_maximizes_cardinality_first() {
        // row 0 prefers col 0 strongly, but taking it strands row 1
        let m = SparseTopKMatrix::from_rows(
            2,
            2,
            vec![vec![(0, 1.0), (1, -1.0)], vec![(0, -1.0)]],
        )
        .unwrap();
        let a = solve_sparse_assignment(&m, true).unwrap();
        assert_eq!(a.mapping, vec![Some(1), Some(0)]);
        assert!(a.unmatched.is_empty());
        assert_eq!(a.total, -2.0);
    }

    #[test]
    fn empty_and_tall_rejected() {
        let empty = SparseTopKMatrix::from_rows(3, 1, vec![]).unwrap();
        assert!(matches!(solve_sparse_assignment(&empty, false), Err(AssignmentError::EmptyMatrix)));
        let tall = SparseTopKMatrix::from_dense(&[vec![0.1], vec![0.2]]).unwrap();
        assert!(matches!(
            solve_sparse_assignment(&tall, true),
            Err(AssignmentError::MoreRowsThanColumns { .. })
        ));
    }

    #[test]
    fn rectangular_uses_best_columns() {
        let m = SparseTopKMatrix::from_dense(&[vec![0.1, 0.5, 0.9], vec![0.2, 0.95, 0.3]]).unwrap();
        let a = solve_sparse_assignment(&m, false).unwrap();
        assert_eq!(a.mapping, vec![Some(2), Some(1)]);
    }
}
