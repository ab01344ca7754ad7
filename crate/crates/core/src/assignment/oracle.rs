//! Exhaustive assignment for tiny matrices, used to check the sparse solver.

use super::{Assignment, AssignmentError};

/// Largest side accepted by [`dense_oracle`].
pub const ORACLE_MAX_SIDE: usize = 9;

/// Enumerates every injective row -> column map and returns one of maximal
/// total. `f64::NEG_INFINITY` marks an absent entry. Totals are summed in row
/// order.
pub fn dense_oracle(values: &[Vec<f64>]) -> Result<Assignment, AssignmentError> {
    let n_rows = values.len();
    let n_cols = values.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 {
        return Err(AssignmentError::EmptyMatrix);
    }
    if values.iter().any(|r| r.len() != n_cols) {
        return Err(AssignmentError::InvalidMatrix("ragged dense matrix".into()));
    }
    if n_rows > n_cols {
        return Err(AssignmentError::MoreRowsThanColumns {
            rows: n_rows,
            cols: n_cols,
        });
    }
    if n_cols > ORACLE_MAX_SIDE {
        return Err(AssignmentError::TooLarge { rows: n_rows, cols: n_cols });
    }

    struct Search<'a> {
        values: &'a [Vec<f64>],
        current: Vec<usize>,
        used: u32,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn go(&mut self, row: usize, total: f64) {
            if row == self.values.len() {
                if self.best.as_ref().is_none_or(|(b, _)| total > *b) {
                    self.best = Some((total, self.current.clone()));
                }
                return;
            }
            for (col, &v) in self.values[row].iter().enumerate() {
                if self.used & (1 << col) != 0 || v == f64::NEG_INFINITY {
                    continue;
                }
                self.used |= 1 << col;
                self.current.push(col);
                self.go(row + 1, total + v);
                self.current.pop();
                self.used &= !(1 << col);
            }
        }
    }

    let mut s = Search {
        values,
        current: Vec::with_capacity(n_rows),
        used: 0,
        best: None,
    };
    s.go(0, 0.0);
    match s.best {
        Some((total, cols)) => Ok(Assignment {
            mapping: cols.into_iter().map(Some).collect(),
            total,
            unmatched: Vec::new(),
        }),
        None => Err(AssignmentError::NoPerfectMatching {
            rows: (0..n_rows).collect(),
        }),
    }
}
