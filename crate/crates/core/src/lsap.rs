//! Rectangular linear sum assignment.
//!
//! Shortest augmenting path Hungarian method with row/column potentials,
//! `O(n²·m)` for an `n × m` cost matrix with `n ≤ m`. Wider-than-tall inputs
//! are transposed internally.

use crate::error::{Error, Result};

/// Row-major dense matrix view used by the solver.
#[derive(Debug, Clone, Copy)]
pub struct MatrixRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> MatrixRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(MatrixRef { data, rows, cols })
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Assigns every row to a distinct column (or every column to a distinct row
/// when there are more rows than columns) minimizing the total cost.
///
/// Returns, for each row, the assigned column.
pub fn minimize(m: MatrixRef<'_>) -> Result<Vec<Option<usize>>> {
    solve(m, 1.0)
}

/// Same as [`minimize`] but maximizing the total.
pub fn maximize(m: MatrixRef<'_>) -> Result<Vec<Option<usize>>> {
    solve(m, -1.0)
}

fn solve(m: MatrixRef<'_>, sign: f64) -> Result<Vec<Option<usize>>> {
    if let Some(&bad) = m.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    if m.rows == 0 || m.cols == 0 {
        return Ok(vec![None; m.rows]);
    }
    if m.rows <= m.cols {
        let cols = hungarian(m.rows, m.cols, |r, c| sign * m.at(r, c));
        Ok(cols.into_iter().map(Some).collect())
    } else {
        let rows_for_col = hungarian(m.cols, m.rows, |c, r| sign * m.at(r, c));
        let mut out = vec![None; m.rows];
        for (c, r) in rows_for_col.into_iter().enumerate() {
            out[r] = Some(c);
        }
        Ok(out)
    }
}

/// Core solver for `n ≤ m`. Returns the column assigned to each row.
fn hungarian(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    // 1-based indices; column 0 is the virtual source of each augmentation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![0usize; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}
