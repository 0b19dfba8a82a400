//! Task Alignment Error.
//!
//! Given `N` annotated instances and `M` predictions, the OKS-optimal
//! one-to-one matching maximizes the summed OKS over injective maps
//! `{1..N} → {1..M}`. TAE is the mean per-instance OKS lost by the
//! predictions an inference procedure actually selected:
//!
//! ```text
//! TAE = (1/N) Σ_i ( OKS(g_i, ŷ*_i) - OKS(g_i, ŷ^s_i) )
//! ```
//!
//! When `N > M` the unmatched instances contribute zero on the optimal side,
//! and any instance without a selected prediction contributes zero on the
//! selected side.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lsap::{self, MatrixRef};
use crate::pose::{oks, GroundTruthInstance, Pose, SigmaTable};

/// `N × M` matrix of OKS values, row `i` for ground truth `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct OksMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl OksMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DegenerateInput(
                "OKS matrix needs at least one row and column",
            ));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParam(format!(
                "OKS entry {bad} outside [0, 1]"
            )));
        }
        Ok(OksMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DegenerateInput("ragged OKS matrix"));
        }
        OksMatrix::new(rows.len(), cols, rows.concat())
    }

    /// OKS of every prediction against every ground truth.
    pub fn from_poses(
        gts: &[GroundTruthInstance],
        preds: &[Pose],
        sigmas: &SigmaTable,
    ) -> Result<Self> {
        let rows: Vec<Vec<f64>> = gts
            .par_iter()
            .map(|g| preds.iter().map(|p| oks(p, g, sigmas)).collect())
            .collect::<Result<_>>()?;
        OksMatrix::from_rows(&rows)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, gt: usize, pred: usize) -> f64 {
        self.values[gt * self.cols + pred]
    }

    pub fn row(&self, gt: usize) -> &[f64] {
        &self.values[gt * self.cols..(gt + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Partial injective map from ground-truth index to prediction index.
pub type Selection = Vec<Option<usize>>;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub mapping: Selection,
    pub total_oks: f64,
    /// OKS of each ground truth under the mapping, 0 when unmatched.
    pub per_gt_oks: Vec<f64>,
}

impl MatchResult {
    fn from_mapping(m: &OksMatrix, mapping: Selection) -> Self {
        let per_gt_oks: Vec<f64> = mapping
            .iter()
            .enumerate()
            .map(|(i, p)| p.map_or(0.0, |j| m.get(i, j)))
            .collect();
        MatchResult {
            total_oks: per_gt_oks.iter().sum(),
            per_gt_oks,
            mapping,
        }
    }
}

/// Globally optimal one-to-one matching maximizing total OKS.
pub fn optimal_match(m: &OksMatrix) -> MatchResult {
    let view = MatrixRef::new(&m.values, m.rows, m.cols).expect("validated shape");
    let mapping = lsap::maximize(view).expect("OKS entries are finite");
    MatchResult::from_mapping(m, mapping)
}

fn validate_selection(m: &OksMatrix, selected: &[Option<usize>]) -> Result<()> {
    if selected.len() != m.rows {
        return Err(Error::DimensionMismatch {
            expected: m.rows,
            found: selected.len(),
        });
    }
    let mut taken = vec![false; m.cols];
    for &j in selected.iter().flatten() {
        if j >= m.cols {
            return Err(Error::IndexOutOfBounds {
                index: j,
                len: m.cols,
            });
        }
        if std::mem::replace(&mut taken[j], true) {
            return Err(Error::NonInjectiveSelection { prediction: j });
        }
    }
    Ok(())
}

/// Task Alignment Error of `selected` against the OKS-optimal matching.
pub fn tae(m: &OksMatrix, selected: &[Option<usize>]) -> Result<f64> {
    let best = optimal_match(m);
    tae_against(m, &best, selected)
}

/// TAE with a precomputed optimal matching.
pub fn tae_against(
    m: &OksMatrix,
    optimal: &MatchResult,
    selected: &[Option<usize>],
) -> Result<f64> {
    validate_selection(m, selected)?;
    let gap: f64 = selected
        .iter()
        .enumerate()
        .map(|(i, s)| optimal.per_gt_oks[i] - s.map_or(0.0, |j| m.get(i, j)))
        .sum();
    Ok(gap / m.rows as f64)
}

/// Mean of per-image values, reduced in image-id order so the aggregate does
/// not depend on the order results were produced in.
pub fn ordered_mean(per_image: &[(u64, f64)]) -> Option<f64> {
    if per_image.is_empty() {
        return None;
    }
    let mut sorted = per_image.to_vec();
    sorted.sort_by_key(|&(id, _)| id);
    Some(sorted.iter().map(|&(_, v)| v).sum::<f64>() / sorted.len() as f64)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput("spearman needs at least two points"));
    }
    if let Some(&bad) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("spearman input is constant"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
