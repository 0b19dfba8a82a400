//! Keypoint-driven label assignment on dense multi-scale grids.
//!
//! Every (ground truth, candidate) pair is scored with
//! `Score = conf^α · OKS^β`. The multi-assignment head (MAH) takes the
//! `k_top` best candidates per ground truth; the single-assignment head
//! (SAH) assigns exactly one candidate per ground truth through an optimal
//! one-to-one matching on Score.
//!
//! Ties on equal Score go to the lower candidate index. Candidates are
//! expected in P3 → P4 → P5 order, row-major within a level.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lsap::{self, MatrixRef};
use crate::pose::{oks, GroundTruthInstance, Pose, SigmaTable};

/// Feature pyramid level of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    P3,
    P4,
    P5,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::P3, Level::P4, Level::P5];

    /// Downsampling ratio in pixels.
    pub fn stride(self) -> u32 {
        match self {
            Level::P3 => 8,
            Level::P4 => 16,
            Level::P5 => 32,
        }
    }

    pub fn from_stride(stride: u32) -> Option<Self> {
        Level::ALL.into_iter().find(|l| l.stride() == stride)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::P3 => "P3",
            Level::P4 => "P4",
            Level::P5 => "P5",
        })
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P3" => Ok(Level::P3),
            "P4" => Ok(Level::P4),
            "P5" => Ok(Level::P5),
            other => Err(Error::InvalidParam(format!(
                "level must be P3, P4 or P5, got {other:?}"
            ))),
        }
    }
}

/// One dense-prediction cell with its decoded pose.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCandidate {
    level: Level,
    pub row: u32,
    pub col: u32,
    conf: f64,
    pub pose: Pose,
    pub vis_probs: Vec<f64>,
}

impl GridCandidate {
    pub fn new(
        level: Level,
        row: u32,
        col: u32,
        conf: f64,
        pose: Pose,
        vis_probs: Vec<f64>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::InvalidParam(format!(
                "confidence {conf} outside [0, 1]"
            )));
        }
        if vis_probs.len() != pose.len() {
            return Err(Error::DimensionMismatch {
                expected: pose.len(),
                found: vis_probs.len(),
            });
        }
        if let Some(&bad) = vis_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParam(format!(
                "visibility probability {bad} outside [0, 1]"
            )));
        }
        Ok(GridCandidate {
            level,
            row,
            col,
            conf,
            pose,
            vis_probs,
        })
    }

    #[inline]
    pub fn level(&self) -> Level {
        self.level
    }

    #[inline]
    pub fn stride(&self) -> u32 {
        self.level.stride()
    }

    #[inline]
    pub fn conf(&self) -> f64 {
        self.conf
    }

    /// Cell center in image coordinates.
    pub fn center(&self) -> (f64, f64) {
        let s = f64::from(self.stride());
        (
            (f64::from(self.col) + 0.5) * s,
            (f64::from(self.row) + 0.5) * s,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignParams {
    alpha: f64,
    beta: f64,
    k_top: usize,
}

impl AssignParams {
    pub fn new(alpha: f64, beta: f64, k_top: usize) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam(format!("{name} must be >= 0, got {v}")));
            }
        }
        if alpha == 0.0 && beta == 0.0 {
            return Err(Error::InvalidParam(
                "alpha and beta cannot both be 0".into(),
            ));
        }
        if k_top == 0 {
            return Err(Error::InvalidParam("k_top must be >= 1".into()));
        }
        Ok(AssignParams { alpha, beta, k_top })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k_top(&self) -> usize {
        self.k_top
    }

    /// Scales both exponents by `c`, which leaves every Top-K ranking intact.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        AssignParams::new(self.alpha * c, self.beta * c, self.k_top)
    }
}

impl Default for AssignParams {
    /// α = 0.5, β = 6, ten positives per instance.
    fn default() -> Self {
        AssignParams {
            alpha: 0.5,
            beta: 6.0,
            k_top: 10,
        }
    }
}

/// `x^p` with `x^0 = 1` and `0^p = 0` for `p > 0`.
#[inline]
fn pow_conv(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if x == 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

/// `conf^α · oks^β`.
pub fn score(conf: f64, oks_val: f64, params: &AssignParams) -> f64 {
    pow_conv(conf, params.alpha) * pow_conv(oks_val, params.beta)
}

/// `p · ln x` under the same conventions as [`score`]; `-inf` marks a zero.
#[inline]
fn log_pow(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * x.ln()
    }
}

/// `ln Score`, computed without forming the product, so it neither
/// underflows for large exponents nor loses ordering when scaled.
pub fn log_score(conf: f64, oks_val: f64, params: &AssignParams) -> f64 {
    log_pow(conf, params.alpha) + log_pow(oks_val, params.beta)
}

/// Row-major `N × M` Score matrix.
///
/// Ranking uses `log_values`; `values` is what gets reported and what the
/// optimal matching sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub log_values: Vec<f64>,
}

impl ScoreMatrix {
    /// Matrix from plain Scores, ranked by their logarithms.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "score matrix shape");
        let log_values = values.iter().map(|v| v.ln()).collect();
        ScoreMatrix {
            rows,
            cols,
            values,
            log_values,
        }
    }

    #[inline]
    pub fn get(&self, gt: usize, cand: usize) -> f64 {
        self.values[gt * self.cols + cand]
    }

    pub fn row(&self, gt: usize) -> &[f64] {
        &self.values[gt * self.cols..(gt + 1) * self.cols]
    }

    fn log_row(&self, gt: usize) -> &[f64] {
        &self.log_values[gt * self.cols..(gt + 1) * self.cols]
    }
}

pub fn score_matrix(
    gts: &[GroundTruthInstance],
    cands: &[GridCandidate],
    sigmas: &SigmaTable,
    params: &AssignParams,
) -> Result<ScoreMatrix> {
    let rows: Vec<Vec<(f64, f64)>> = gts
        .par_iter()
        .map(|g| {
            cands
                .iter()
                .map(|c| {
                    let o = oks(&c.pose, g, sigmas)?;
                    Ok((score(c.conf, o, params), log_score(c.conf, o, params)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (values, log_values) = rows.into_iter().flatten().unzip();
    Ok(ScoreMatrix {
        rows: gts.len(),
        cols: cands.len(),
        values,
        log_values,
    })
}

/// A positive candidate and the ground truth that owns it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Positive {
    pub candidate: usize,
    pub gt: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// Per ground truth, owned `(candidate, score)` pairs by descending score.
    pub per_gt: Vec<Vec<(usize, f64)>>,
    /// Deduplicated positive set, ordered by candidate index.
    pub positives: Vec<Positive>,
}

impl AssignmentResult {
    /// First-ranked candidate of each ground truth.
    pub fn top_candidates(&self) -> Vec<Option<usize>> {
        self.per_gt
            .iter()
            .map(|v| v.first().map(|&(c, _)| c))
            .collect()
    }
}

/// Descending score, ascending index.
#[inline]
fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn top_k(row: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = row.iter().copied().enumerate().collect();
    let k = k.min(ranked.len());
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k, |&a, &b| rank_order(a, b));
        ranked.truncate(k);
    }
    ranked.sort_by(|&a, &b| rank_order(a, b));
    ranked
}

/// Resolves candidates claimed by several ground truths: the higher key
/// owns it (lower ground-truth index on ties) and the loser does not refill.
/// Claims carry ranking keys; the result reports Scores.
fn resolve(claims: Vec<Vec<(usize, f64)>>, scores: &ScoreMatrix) -> AssignmentResult {
    let num_cands = scores.cols;
    let mut owner: Vec<Option<(usize, f64)>> = vec![None; num_cands];
    for (g, list) in claims.iter().enumerate() {
        for &(c, s) in list {
            match owner[c] {
                Some((_, best)) if best >= s => {}
                _ => owner[c] = Some((g, s)),
            }
        }
    }
    let per_gt = claims
        .into_iter()
        .enumerate()
        .map(|(g, list)| {
            list.into_iter()
                .filter(|&(c, _)| owner[c].map(|(o, _)| o) == Some(g))
                .map(|(c, _)| (c, scores.get(g, c)))
                .collect()
        })
        .collect();
    let positives = owner
        .into_iter()
        .enumerate()
        .filter_map(|(c, o)| {
            o.map(|(gt, _)| Positive {
                candidate: c,
                gt,
                score: scores.get(gt, c),
            })
        })
        .collect();
    AssignmentResult { per_gt, positives }
}

fn check_inputs(gts: &[GroundTruthInstance], cands: &[GridCandidate]) -> Result<()> {
    if cands.is_empty() {
        return Err(Error::NoCandidates);
    }
    if gts.iter().any(|g| g.num_labeled() == 0) {
        return Err(Error::NoVisibleKeypoints);
    }
    Ok(())
}

/// Multi-assignment head: per-ground-truth Top-K on Score.
pub fn assign_mah(
    gts: &[GroundTruthInstance],
    cands: &[GridCandidate],
    sigmas: &SigmaTable,
    params: &AssignParams,
) -> Result<AssignmentResult> {
    check_inputs(gts, cands)?;
    let scores = score_matrix(gts, cands, sigmas, params)?;
    Ok(mah_from_scores(&scores, params.k_top))
}

pub fn mah_from_scores(scores: &ScoreMatrix, k_top: usize) -> AssignmentResult {
    let claims = (0..scores.rows)
        .map(|g| top_k(scores.log_row(g), k_top))
        .collect();
    resolve(claims, scores)
}

/// How the single-assignment head picks its one positive per instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SahMode {
    /// Optimal one-to-one matching maximizing total Score.
    #[default]
    Optimal,
    /// Independent per-instance argmax; conflicts resolved as in MAH.
    IndependentArgmax,
}

/// Single-assignment head: exactly one positive per ground truth.
pub fn assign_sah(
    gts: &[GroundTruthInstance],
    cands: &[GridCandidate],
    sigmas: &SigmaTable,
    params: &AssignParams,
) -> Result<AssignmentResult> {
    assign_sah_with(gts, cands, sigmas, params, SahMode::Optimal)
}

pub fn assign_sah_with(
    gts: &[GroundTruthInstance],
    cands: &[GridCandidate],
    sigmas: &SigmaTable,
    params: &AssignParams,
    mode: SahMode,
) -> Result<AssignmentResult> {
    check_inputs(gts, cands)?;
    if cands.len() < gts.len() {
        return Err(Error::InsufficientCandidates {
            gts: gts.len(),
            cands: cands.len(),
        });
    }
    let scores = score_matrix(gts, cands, sigmas, params)?;
    Ok(sah_from_scores(&scores, mode))
}

pub fn sah_from_scores(scores: &ScoreMatrix, mode: SahMode) -> AssignmentResult {
    match mode {
        SahMode::IndependentArgmax => mah_from_scores(scores, 1),
        SahMode::Optimal => {
            let view = MatrixRef::new(&scores.values, scores.rows, scores.cols)
                .expect("score matrix shape");
            let mapping = lsap::maximize(view).expect("scores are finite");
            let claims = mapping
                .iter()
                .enumerate()
                .map(|(g, c)| c.map(|c| (c, scores.get(g, c))).into_iter().collect())
                .collect();
            resolve(claims, scores)
        }
    }
}
