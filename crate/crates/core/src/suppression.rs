//! Keypoint non-maximum suppression and NMS-free confidence selection.

use crate::error::{Error, Result};
use crate::pose::{oks_unmasked, Pose, SigmaTable};

/// A predicted pose with its confidence and instance scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPose {
    pub pose: Pose,
    conf: f64,
    scale: f64,
}

impl ScoredPose {
    pub fn new(pose: Pose, conf: f64, scale: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::InvalidParam(format!(
                "confidence {conf} outside [0, 1]"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::DegenerateScale(scale));
        }
        Ok(ScoredPose { pose, conf, scale })
    }

    /// Uses `√(extent area)` of the keypoints as scale, falling back to 1 px
    /// for collapsed poses.
    pub fn from_extent(pose: Pose, conf: f64) -> Result<Self> {
        let area = pose.extent_area();
        let scale = if area > 0.0 { area.sqrt() } else { 1.0 };
        ScoredPose::new(pose, conf, scale)
    }

    pub fn conf(&self) -> f64 {
        self.conf
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Which scale normalizes the OKS between a kept pose and a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairScale {
    /// Scale of the higher-confidence, already kept pose.
    #[default]
    Kept,
    /// Larger of the two scales.
    Max,
    /// Geometric mean of the two scales.
    GeometricMean,
}

impl PairScale {
    fn pick(self, kept: f64, other: f64) -> f64 {
        match self {
            PairScale::Kept => kept,
            PairScale::Max => kept.max(other),
            PairScale::GeometricMean => (kept * other).sqrt(),
        }
    }
}

/// Indices ordered by confidence descending, index ascending on ties.
pub fn confidence_order(cands: &[ScoredPose]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| cands[b].conf.total_cmp(&cands[a].conf).then(a.cmp(&b)));
    order
}

/// Greedy OKS-NMS. A candidate is suppressed when its OKS with any kept pose
/// exceeds `thr`. Returns kept indices in confidence order.
pub fn oks_nms(cands: &[ScoredPose], sigmas: &SigmaTable, thr: f64) -> Result<Vec<usize>> {
    oks_nms_with(cands, sigmas, thr, PairScale::Kept)
}

pub fn oks_nms_with(
    cands: &[ScoredPose],
    sigmas: &SigmaTable,
    thr: f64,
    pair_scale: PairScale,
) -> Result<Vec<usize>> {
    if !(thr > 0.0 && thr < 1.0) {
        return Err(Error::InvalidParam(format!(
            "NMS threshold {thr} outside (0, 1)"
        )));
    }
    let mut kept: Vec<usize> = Vec::new();
    'cand: for i in confidence_order(cands) {
        for &k in &kept {
            let s = pair_scale.pick(cands[k].scale, cands[i].scale);
            if oks_unmasked(&cands[i].pose, &cands[k].pose, s, sigmas)? > thr {
                continue 'cand;
            }
        }
        kept.push(i);
    }
    Ok(kept)
}

/// NMS-free selection: every candidate with `conf ≥ conf_thr`, input order.
pub fn conf_select(cands: &[ScoredPose], conf_thr: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&conf_thr) {
        return Err(Error::InvalidParam(format!(
            "confidence threshold {conf_thr} outside [0, 1]"
        )));
    }
    Ok(cands
        .iter()
        .enumerate()
        .filter(|(_, c)| c.conf >= conf_thr)
        .map(|(i, _)| i)
        .collect())
}
