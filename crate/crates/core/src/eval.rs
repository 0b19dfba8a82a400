//! COCO-protocol keypoint evaluation.
//!
//! Follows `pycocotools` keypoint evaluation: per-image greedy matching of
//! score-sorted detections to ground truths at each OKS threshold, ground
//! truths outside the area range ignored, precision interpolated at 101
//! recall points and averaged over thresholds `0.50:0.05:0.95`.
//!
//! Differences from the reference evaluator:
//! - ground truths with no labeled keypoints are dropped entirely rather
//!   than matched through a box-distance fallback;
//! - area ranges are half-open `[lo, hi)`;
//! - precision is `tp / (tp + fp)` without the `ε` guard, so a perfect
//!   detector scores exactly 1.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pose::{oks, GroundTruthInstance, Pose, SigmaTable};

/// Number of recall points in the interpolated precision curve.
pub const RECALL_POINTS: usize = 101;
/// Default detections kept per image.
pub const DEFAULT_MAX_DETS: usize = 20;
/// Lower area bound of the medium range, 32² px².
pub const MEDIUM_AREA: f64 = 32.0 * 32.0;
/// Lower area bound of the large range, 96² px².
pub const LARGE_AREA: f64 = 96.0 * 96.0;

/// `0.50, 0.55, …, 0.95`.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub image_id: u64,
    pub pose: Pose,
    pub score: f64,
    /// Filled by [`label_detections`].
    pub matched_gt: Option<u64>,
}

impl Detection {
    pub fn new(image_id: u64, pose: Pose, score: f64) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::NonFinite(score));
        }
        Ok(Detection {
            image_id,
            pose,
            score,
            matched_gt: None,
        })
    }
}

/// A ground-truth instance tagged with its image.
#[derive(Debug, Clone)]
pub struct ImageInstance {
    pub image_id: u64,
    pub instance: GroundTruthInstance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl AreaRange {
    pub fn new(name: &str, lo: f64, hi: f64) -> Self {
        AreaRange {
            name: name.to_owned(),
            lo,
            hi,
        }
    }

    #[inline]
    pub fn contains(&self, area: f64) -> bool {
        area >= self.lo && area < self.hi
    }

    /// `all`, `medium` and `large`.
    pub fn coco_keypoints() -> Vec<AreaRange> {
        vec![
            AreaRange::new("all", 0.0, f64::INFINITY),
            AreaRange::new("medium", MEDIUM_AREA, LARGE_AREA),
            AreaRange::new("large", LARGE_AREA, f64::INFINITY),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub thresholds: Vec<f64>,
    pub area_ranges: Vec<AreaRange>,
    pub max_dets: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            thresholds: default_thresholds(),
            area_ranges: AreaRange::coco_keypoints(),
            max_dets: DEFAULT_MAX_DETS,
        }
    }
}

/// Precision-recall data of one threshold over the `all` area range.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub threshold: f64,
    /// Cumulative recall after each detection in score order.
    pub recall: Vec<f64>,
    /// Cumulative precision after each detection in score order.
    pub precision: Vec<f64>,
    /// Interpolated precision at recall `0.00, 0.01, …, 1.00`.
    pub interpolated: Vec<f64>,
}

/// Per-area results. `None` marks an undefined metric (no ground truth).
#[derive(Debug, Clone, PartialEq)]
pub struct AreaMetrics {
    pub range: AreaRange,
    pub ap_per_threshold: Vec<Option<f64>>,
    pub recall_per_threshold: Vec<Option<f64>>,
    pub num_gt: usize,
}

impl AreaMetrics {
    pub fn ap(&self) -> Option<f64> {
        mean_defined(&self.ap_per_threshold)
    }

    pub fn ar(&self) -> Option<f64> {
        mean_defined(&self.recall_per_threshold)
    }
}

fn mean_defined(v: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = v.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub ar: Option<f64>,
    pub ar50: Option<f64>,
    pub ar75: Option<f64>,
    pub ar_medium: Option<f64>,
    pub ar_large: Option<f64>,
    pub thresholds: Vec<f64>,
    pub areas: Vec<AreaMetrics>,
    pub curves: Vec<PrCurve>,
}

impl EvalSummary {
    /// Metric vocabulary used in reports: `(name, value)`.
    pub fn metrics(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("AP", self.ap),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("APm", self.ap_medium),
            ("APl", self.ap_large),
            ("AR", self.ar),
            ("AR50", self.ar50),
            ("AR75", self.ar75),
            ("ARm", self.ar_medium),
            ("ARl", self.ar_large),
        ]
    }
}

/// Greedy matching of score-sorted detections in one image.
///
/// Each detection takes the unmatched ground truth with the highest OKS if
/// that OKS is at least `oks_thr`. Returns the matched ground-truth index per
/// detection (`None` is a false positive).
pub fn match_image(
    dets: &[Pose],
    gts: &[GroundTruthInstance],
    sigmas: &SigmaTable,
    oks_thr: f64,
) -> Result<Vec<Option<usize>>> {
    let ious = oks_table(dets, gts, sigmas)?;
    let ignore = vec![false; gts.len()];
    let order: Vec<usize> = (0..gts.len()).collect();
    Ok(greedy_match(
        &ious,
        dets.len(),
        gts.len(),
        &order,
        &ignore,
        oks_thr,
    ))
}

/// Sets `matched_gt` on every detection at `oks_thr`, per image, using the
/// score order (ties in input order).
pub fn label_detections(
    dets: &mut [Detection],
    gts: &[ImageInstance],
    sigmas: &SigmaTable,
    oks_thr: f64,
) -> Result<()> {
    let mut by_image: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        by_image.entry(d.image_id).or_default().push(i);
    }
    for (image_id, mut idx) in by_image {
        idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
        let image_gts: Vec<&GroundTruthInstance> = gts
            .iter()
            .filter(|g| g.image_id == image_id && g.instance.num_labeled() > 0)
            .map(|g| &g.instance)
            .collect();
        let owned: Vec<GroundTruthInstance> = image_gts.iter().map(|g| (*g).clone()).collect();
        let poses: Vec<Pose> = idx.iter().map(|&i| dets[i].pose.clone()).collect();
        let m = match_image(&poses, &owned, sigmas, oks_thr)?;
        for (&i, g) in idx.iter().zip(m) {
            dets[i].matched_gt = g.map(|g| owned[g].id);
        }
    }
    Ok(())
}

fn oks_table(dets: &[Pose], gts: &[GroundTruthInstance], sigmas: &SigmaTable) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dets.len() * gts.len());
    for d in dets {
        for g in gts {
            out.push(oks(d, g, sigmas)?);
        }
    }
    Ok(out)
}

/// `pycocotools`-style matching. `gt_order` lists ground truths with
/// non-ignored ones first; once a non-ignored match is held, ignored
/// candidates are not considered.
fn greedy_match(
    ious: &[f64],
    num_dets: usize,
    num_gts: usize,
    gt_order: &[usize],
    gt_ignore: &[bool],
    thr: f64,
) -> Vec<Option<usize>> {
    let mut gt_taken = vec![false; num_gts];
    let mut out = vec![None; num_dets];
    for (d, slot) in out.iter_mut().enumerate() {
        let mut best = thr.min(1.0 - 1e-10);
        let mut m: Option<usize> = None;
        for &g in gt_order {
            if gt_taken[g] {
                continue;
            }
            if let Some(cur) = m {
                if !gt_ignore[cur] && gt_ignore[g] {
                    break;
                }
            }
            let v = ious[d * num_gts + g];
            if v < best {
                continue;
            }
            best = v;
            m = Some(g);
        }
        if let Some(g) = m {
            gt_taken[g] = true;
        }
        *slot = m;
    }
    out
}

/// Matching outcome for one (image, area range, threshold).
#[derive(Debug, Clone, Default)]
struct ImageThrResult {
    /// `(score, matched, ignored)` per kept detection in score order.
    dets: Vec<(f64, bool, bool)>,
    num_gt: usize,
}

fn evaluate_image(
    dets: &[&Detection],
    gts: &[&GroundTruthInstance],
    sigmas: &SigmaTable,
    params: &EvalParams,
) -> Result<Vec<Vec<ImageThrResult>>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order.truncate(params.max_dets);
    let poses: Vec<Pose> = order.iter().map(|&i| dets[i].pose.clone()).collect();
    let scores: Vec<f64> = order.iter().map(|&i| dets[i].score).collect();
    let det_area: Vec<f64> = poses.iter().map(Pose::extent_area).collect();
    let owned: Vec<GroundTruthInstance> = gts.iter().map(|g| (*g).clone()).collect();
    let ious = oks_table(&poses, &owned, sigmas)?;

    let mut per_area = Vec::with_capacity(params.area_ranges.len());
    for range in &params.area_ranges {
        let gt_ignore: Vec<bool> = owned.iter().map(|g| !range.contains(g.area())).collect();
        let mut gt_order: Vec<usize> = (0..owned.len()).collect();
        gt_order.sort_by_key(|&g| gt_ignore[g]);
        let num_gt = gt_ignore.iter().filter(|&&ig| !ig).count();

        let per_thr = params
            .thresholds
            .iter()
            .map(|&thr| {
                let m = greedy_match(&ious, poses.len(), owned.len(), &gt_order, &gt_ignore, thr);
                let dets = m
                    .iter()
                    .enumerate()
                    .map(|(d, g)| match g {
                        Some(g) => (scores[d], true, gt_ignore[*g]),
                        None => (scores[d], false, !range.contains(det_area[d])),
                    })
                    .collect();
                ImageThrResult { dets, num_gt }
            })
            .collect();
        per_area.push(per_thr);
    }
    Ok(per_area)
}

/// `(ap, recall, recall curve, precision curve, interpolated precision)`.
type Accumulated = (f64, f64, Vec<f64>, Vec<f64>, Vec<f64>);

/// Interpolated precision at the recall points plus raw curves.
fn accumulate(images: &[&ImageThrResult]) -> Option<Accumulated> {
    let num_gt: usize = images.iter().map(|r| r.num_gt).sum();
    if num_gt == 0 {
        return None;
    }
    let mut all: Vec<(f64, bool, bool)> =
        images.iter().flat_map(|r| r.dets.iter().copied()).collect();
    // Stable: equal scores keep image order, then detection order.
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut recall = Vec::with_capacity(all.len());
    let mut precision = Vec::with_capacity(all.len());
    for &(_, matched, ignored) in &all {
        if !ignored {
            if matched {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        });
    }
    let mut envelope = precision.clone();
    for i in (1..envelope.len()).rev() {
        if envelope[i] > envelope[i - 1] {
            envelope[i - 1] = envelope[i];
        }
    }
    let interpolated: Vec<f64> = (0..RECALL_POINTS)
        .map(|r| {
            let level = r as f64 / (RECALL_POINTS - 1) as f64;
            let idx = recall.partition_point(|&rc| rc < level);
            envelope.get(idx).copied().unwrap_or(0.0)
        })
        .collect();
    let ap = interpolated.iter().sum::<f64>() / RECALL_POINTS as f64;
    let final_recall = recall.last().copied().unwrap_or(0.0);
    Some((ap, final_recall, recall, precision, interpolated))
}

/// Evaluates over every image that has at least one ground-truth instance.
pub fn evaluate(
    dets: &[Detection],
    gts: &[ImageInstance],
    sigmas: &SigmaTable,
    params: &EvalParams,
) -> Result<EvalSummary> {
    let mut images: Vec<u64> = gts.iter().map(|g| g.image_id).collect();
    images.sort_unstable();
    images.dedup();
    evaluate_images(dets, gts, &images, sigmas, params)
}

/// Evaluates over an explicit image set. Detections on other images are
/// skipped.
pub fn evaluate_images(
    dets: &[Detection],
    gts: &[ImageInstance],
    image_ids: &[u64],
    sigmas: &SigmaTable,
    params: &EvalParams,
) -> Result<EvalSummary> {
    if params.thresholds.is_empty() || params.area_ranges.is_empty() {
        return Err(Error::InvalidParam(
            "need at least one threshold and area range".into(),
        ));
    }
    if params.max_dets == 0 {
        return Err(Error::InvalidParam("max_dets must be >= 1".into()));
    }
    let k = sigmas.len();
    if let Some(bad) = dets.iter().map(|d| d.pose.len()).find(|&n| n != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: bad,
        });
    }
    if let Some(bad) = gts.iter().map(|g| g.instance.pose.len()).find(|&n| n != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: bad,
        });
    }

    let mut ids = image_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut det_by_image: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        det_by_image.entry(d.image_id).or_default().push(d);
    }
    let mut gt_by_image: BTreeMap<u64, Vec<&GroundTruthInstance>> = BTreeMap::new();
    for g in gts {
        if g.instance.num_labeled() > 0 {
            gt_by_image.entry(g.image_id).or_default().push(&g.instance);
        }
    }

    let per_image: Vec<Vec<Vec<ImageThrResult>>> = ids
        .par_iter()
        .map(|id| {
            let d = det_by_image.get(id).map_or(&[][..], Vec::as_slice);
            let g = gt_by_image.get(id).map_or(&[][..], Vec::as_slice);
            evaluate_image(d, g, sigmas, params)
        })
        .collect::<Result<_>>()?;

    let mut areas = Vec::with_capacity(params.area_ranges.len());
    let mut curves = Vec::new();
    for (a, range) in params.area_ranges.iter().enumerate() {
        let mut ap_t = Vec::with_capacity(params.thresholds.len());
        let mut rc_t = Vec::with_capacity(params.thresholds.len());
        let mut num_gt = 0;
        for (t, &thr) in params.thresholds.iter().enumerate() {
            let slices: Vec<&ImageThrResult> = per_image.iter().map(|img| &img[a][t]).collect();
            num_gt = slices.iter().map(|r| r.num_gt).sum();
            match accumulate(&slices) {
                Some((ap, rc, recall, precision, interpolated)) => {
                    ap_t.push(Some(ap));
                    rc_t.push(Some(rc));
                    if a == 0 {
                        curves.push(PrCurve {
                            threshold: thr,
                            recall,
                            precision,
                            interpolated,
                        });
                    }
                }
                None => {
                    ap_t.push(None);
                    rc_t.push(None);
                }
            }
        }
        areas.push(AreaMetrics {
            range: range.clone(),
            ap_per_threshold: ap_t,
            recall_per_threshold: rc_t,
            num_gt,
        });
    }

    let area = |name: &str| areas.iter().find(|m| m.range.name == name);
    let at_thr = |m: Option<&AreaMetrics>, thr: f64, recall: bool| -> Option<f64> {
        let m = m?;
        let t = params
            .thresholds
            .iter()
            .position(|&x| (x - thr).abs() < 1e-9)?;
        if recall {
            m.recall_per_threshold[t]
        } else {
            m.ap_per_threshold[t]
        }
    };
    let all = area("all").or(areas.first());
    Ok(EvalSummary {
        ap: all.and_then(AreaMetrics::ap),
        ap50: at_thr(all, 0.5, false),
        ap75: at_thr(all, 0.75, false),
        ap_medium: area("medium").and_then(AreaMetrics::ap),
        ap_large: area("large").and_then(AreaMetrics::ap),
        ar: all.and_then(AreaMetrics::ar),
        ar50: at_thr(all, 0.5, true),
        ar75: at_thr(all, 0.75, true),
        ar_medium: area("medium").and_then(AreaMetrics::ar),
        ar_large: area("large").and_then(AreaMetrics::ar),
        thresholds: params.thresholds.clone(),
        areas: areas.clone(),
        curves,
    })
}
