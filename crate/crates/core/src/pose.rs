//! Keypoint and pose types, per-keypoint sigma tables and the Object
//! Keypoint Similarity (OKS) kernel.
//!
//! OKS between a predicted pose and an annotated instance with scale `s`
//! (square root of the instance area) and per-keypoint constants `k_i` is
//!
//! ```text
//! OKS = Σ_i exp(-d_i² / (2 s² k_i²)) δ(v_i > 0) / Σ_i δ(v_i > 0)
//! ```
//!
//! where `d_i` is the Euclidean distance between predicted and annotated
//! keypoint `i` and `v_i` is the annotated visibility. Predicted visibility
//! never enters the kernel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotated visibility of a keypoint, following the COCO convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Visibility {
    /// Not labeled (v = 0).
    Unlabeled,
    /// Labeled but occluded or of low reliability (v = 1).
    Occluded,
    /// Labeled and visible (v = 2).
    Visible,
}

impl Visibility {
    /// `δ(v > 0)`. Occluded and visible keypoints gate identically.
    #[inline]
    pub fn is_labeled(self) -> bool {
        !matches!(self, Visibility::Unlabeled)
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Visibility::Unlabeled => 0,
            Visibility::Occluded => 1,
            Visibility::Visible => 2,
        }
    }

    /// Interprets a COCO-style float flag. Only exactly 0, 1 or 2 are accepted.
    pub fn from_f64(v: f64) -> Option<Self> {
        if v == 0.0 {
            Some(Visibility::Unlabeled)
        } else if v == 1.0 {
            Some(Visibility::Occluded)
        } else if v == 2.0 {
            Some(Visibility::Visible)
        } else {
            None
        }
    }
}

impl TryFrom<u8> for Visibility {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            0 => Ok(Visibility::Unlabeled),
            1 => Ok(Visibility::Occluded),
            2 => Ok(Visibility::Visible),
            other => Err(format!("visibility must be 0, 1 or 2, got {other}")),
        }
    }
}

impl From<Visibility> for u8 {
    fn from(v: Visibility) -> u8 {
        v.as_u8()
    }
}

/// A single keypoint in image coordinates (pixels, sub-pixel precision).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub v: Visibility,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, v: Visibility) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite(y));
        }
        Ok(Keypoint { x, y, v })
    }

    /// A visible keypoint; panics on non-finite coordinates.
    pub fn visible(x: f64, y: f64) -> Self {
        Keypoint::new(x, y, Visibility::Visible).expect("finite keypoint coordinates")
    }

    #[inline]
    pub fn dist_sq(&self, other: &Keypoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// An ordered set of `K` keypoints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pose {
    keypoints: Vec<Keypoint>,
}

impl Pose {
    pub fn new(keypoints: Vec<Keypoint>) -> Self {
        Pose { keypoints }
    }

    /// Builds a pose from COCO flat triplets `[x1, y1, v1, x2, y2, v2, ...]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(3) {
            return Err(Error::InvalidParam(format!(
                "flat keypoint array length {} is not a multiple of 3",
                flat.len()
            )));
        }
        let keypoints = flat
            .chunks_exact(3)
            .map(|t| {
                let v = Visibility::from_f64(t[2]).ok_or_else(|| {
                    Error::InvalidParam(format!("visibility must be 0, 1 or 2, got {}", t[2]))
                })?;
                Keypoint::new(t[0], t[1], v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Pose { keypoints })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.keypoints
            .iter()
            .flat_map(|k| [k.x, k.y, f64::from(k.v.as_u8())])
            .collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    #[inline]
    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn keypoints_mut(&mut self) -> &mut [Keypoint] {
        &mut self.keypoints
    }

    pub fn num_labeled(&self) -> usize {
        self.keypoints.iter().filter(|k| k.v.is_labeled()).count()
    }

    /// Axis-aligned extent of all keypoints as `(x0, y0, x1, y1)`.
    pub fn extent(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.keypoints.first()?;
        let init = (first.x, first.y, first.x, first.y);
        Some(self.keypoints.iter().fold(init, |(x0, y0, x1, y1), k| {
            (x0.min(k.x), y0.min(k.y), x1.max(k.x), y1.max(k.y))
        }))
    }

    /// Extent of the labeled keypoints only.
    pub fn labeled_extent(&self) -> Option<(f64, f64, f64, f64)> {
        let mut it = self.keypoints.iter().filter(|k| k.v.is_labeled());
        let first = it.next()?;
        let init = (first.x, first.y, first.x, first.y);
        Some(it.fold(init, |(x0, y0, x1, y1), k| {
            (x0.min(k.x), y0.min(k.y), x1.max(k.x), y1.max(k.y))
        }))
    }

    /// Area of the keypoint extent, the COCO convention for detection area.
    pub fn extent_area(&self) -> f64 {
        self.extent()
            .map(|(x0, y0, x1, y1)| (x1 - x0) * (y1 - y0))
            .unwrap_or(0.0)
    }
}

impl From<Vec<Keypoint>> for Pose {
    fn from(keypoints: Vec<Keypoint>) -> Self {
        Pose::new(keypoints)
    }
}

/// An annotated person: pose, area and the derived scale `s = √area`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub id: u64,
    pub pose: Pose,
    area: f64,
    scale: f64,
    pub bbox: Option<[f64; 4]>,
}

impl GroundTruthInstance {
    pub fn new(id: u64, pose: Pose, area: f64, bbox: Option<[f64; 4]>) -> Result<Self> {
        if !area.is_finite() {
            return Err(Error::NonFinite(area));
        }
        if area <= 0.0 {
            return Err(Error::DegenerateScale(area));
        }
        Ok(GroundTruthInstance {
            id,
            pose,
            area,
            scale: area.sqrt(),
            bbox,
        })
    }

    /// Instance whose area is the tight box around its labeled keypoints.
    pub fn from_keypoint_box(id: u64, pose: Pose) -> Result<Self> {
        let (x0, y0, x1, y1) = pose.labeled_extent().ok_or(Error::NoVisibleKeypoints)?;
        let bbox = [x0, y0, x1 - x0, y1 - y0];
        GroundTruthInstance::new(id, pose, bbox[2] * bbox[3], Some(bbox))
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.area
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn num_labeled(&self) -> usize {
        self.pose.num_labeled()
    }
}

/// Per-keypoint normalization constants `k_i`.
///
/// The built-in COCO and CrowdPose tables are the official evaluation
/// sigmas `σ_i` multiplied by two, since the official evaluator computes
/// `exp(-d² / (2·area·(2σ)²))`. With `k_i = 2σ_i` the kernel above is
/// identical to the one in `pycocotools`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTable {
    k: Vec<f64>,
}

/// Official COCO keypoint evaluation sigmas (see `pycocotools/cocoeval.py`,
/// `Params.setKpParams`), in COCO keypoint order.
pub const COCO17_SIGMAS: [f64; 17] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107,
    0.087, 0.087, 0.089, 0.089,
];

/// CrowdPose evaluation sigmas from the CrowdPose toolkit, in CrowdPose
/// keypoint order (12 limb joints, then head top and neck).
pub const CROWDPOSE14_SIGMAS: [f64; 14] = [
    0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089, 0.079,
    0.079,
];

impl SigmaTable {
    pub fn new(k: Vec<f64>) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::InvalidParam("sigma table is empty".into()));
        }
        if let Some(&bad) = k.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParam(format!(
                "sigma constants must be positive and finite, got {bad}"
            )));
        }
        Ok(SigmaTable { k })
    }

    pub fn coco17() -> Self {
        SigmaTable {
            k: COCO17_SIGMAS.iter().map(|s| 2.0 * s).collect(),
        }
    }

    pub fn crowdpose14() -> Self {
        SigmaTable {
            k: CROWDPOSE14_SIGMAS.iter().map(|s| 2.0 * s).collect(),
        }
    }

    /// `k_i = 1/K`, the fallback when no dataset statistics are available.
    pub fn uniform(num_keypoints: usize) -> Result<Self> {
        if num_keypoints == 0 {
            return Err(Error::InvalidParam(
                "uniform sigma table needs K >= 1".into(),
            ));
        }
        Ok(SigmaTable {
            k: vec![1.0 / num_keypoints as f64; num_keypoints],
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.k.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.k
    }
}

/// A named sigma table. `Uniform(None)` takes its `K` from the data.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaPreset {
    Coco17,
    CrowdPose14,
    Uniform(Option<usize>),
    Custom(String, SigmaTable),
}

impl SigmaPreset {
    /// Resolves the preset into a table for poses with `num_keypoints` joints.
    pub fn table(&self, num_keypoints: usize) -> Result<SigmaTable> {
        let table = match self {
            SigmaPreset::Coco17 => SigmaTable::coco17(),
            SigmaPreset::CrowdPose14 => SigmaTable::crowdpose14(),
            SigmaPreset::Uniform(k) => SigmaTable::uniform(k.unwrap_or(num_keypoints))?,
            SigmaPreset::Custom(_, t) => t.clone(),
        };
        if table.len() != num_keypoints {
            return Err(Error::DimensionMismatch {
                expected: num_keypoints,
                found: table.len(),
            });
        }
        Ok(table)
    }

    pub fn name(&self) -> String {
        match self {
            SigmaPreset::Coco17 => "coco17".into(),
            SigmaPreset::CrowdPose14 => "crowdpose14".into(),
            SigmaPreset::Uniform(None) => "uniform".into(),
            SigmaPreset::Uniform(Some(k)) => format!("uniform({k})"),
            SigmaPreset::Custom(name, _) => name.clone(),
        }
    }
}

impl fmt::Display for SigmaPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for SigmaPreset {
    type Err = Error;

    /// Parses the built-in names `coco17`, `crowdpose14`, `uniform` and
    /// `uniform(K)`. Custom tables are resolved by [`crate::io::resolve_sigmas`].
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "coco17" | "coco" => return Ok(SigmaPreset::Coco17),
            "crowdpose14" | "crowdpose" => return Ok(SigmaPreset::CrowdPose14),
            "uniform" => return Ok(SigmaPreset::Uniform(None)),
            _ => {}
        }
        if let Some(inner) = s.strip_prefix("uniform(").and_then(|r| r.strip_suffix(')')) {
            let k: usize = inner
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad keypoint count in {s:?}")))?;
            SigmaTable::uniform(k)?;
            return Ok(SigmaPreset::Uniform(Some(k)));
        }
        Err(Error::InvalidParam(format!("unknown sigma preset {s:?}")))
    }
}

fn check_dims(pred: &Pose, target: &Pose, sigmas: &SigmaTable) -> Result<()> {
    let k = target.len();
    if pred.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: pred.len(),
        });
    }
    if sigmas.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: sigmas.len(),
        });
    }
    Ok(())
}

/// Object Keypoint Similarity between a prediction and an annotated instance.
///
/// Only annotated visibility gates the sum; `v = 1` and `v = 2` count alike.
pub fn oks(pred: &Pose, gt: &GroundTruthInstance, sigmas: &SigmaTable) -> Result<f64> {
    check_dims(pred, &gt.pose, sigmas)?;
    oks_kernel(pred, &gt.pose, gt.scale(), sigmas, true)
}

/// OKS between two poses where every keypoint counts as visible, using the
/// given scale. This is the prediction-vs-prediction similarity used by
/// keypoint NMS.
pub fn oks_unmasked(a: &Pose, b: &Pose, scale: f64, sigmas: &SigmaTable) -> Result<f64> {
    check_dims(a, b, sigmas)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::DegenerateScale(scale));
    }
    oks_kernel(a, b, scale, sigmas, false)
}

fn oks_kernel(
    pred: &Pose,
    target: &Pose,
    scale: f64,
    sigmas: &SigmaTable,
    gate_on_target: bool,
) -> Result<f64> {
    let s2 = scale * scale;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((p, g), k) in pred
        .keypoints()
        .iter()
        .zip(target.keypoints())
        .zip(sigmas.values())
    {
        if gate_on_target && !g.v.is_labeled() {
            continue;
        }
        sum += (-p.dist_sq(g) / (2.0 * s2 * k * k)).exp();
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoVisibleKeypoints);
    }
    Ok(sum / count as f64)
}

/// Per-keypoint normalized errors `u_i = d_i / (s·k_i)` for every keypoint,
/// labeled or not. Callers apply visibility masks themselves.
pub fn normalized_errors(
    pred: &Pose,
    gt: &GroundTruthInstance,
    sigmas: &SigmaTable,
) -> Result<Vec<f64>> {
    check_dims(pred, &gt.pose, sigmas)?;
    let s = gt.scale();
    if s.is_nan() || s <= 0.0 {
        return Err(Error::DegenerateScale(s));
    }
    Ok(pred
        .keypoints()
        .iter()
        .zip(gt.pose.keypoints())
        .zip(sigmas.values())
        .map(|((p, g), k)| p.dist_sq(g).sqrt() / (s * k))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gt_from(points: &[(f64, f64, u8)], area: f64) -> GroundTruthInstance {
        let kps = points
            .iter()
            .map(|&(x, y, v)| Keypoint::new(x, y, v.try_into().unwrap()).unwrap())
            .collect();
        GroundTruthInstance::new(1, Pose::new(kps), area, None).unwrap()
    }

    fn pred_from(points: &[(f64, f64)]) -> Pose {
        Pose::new(
            points
                .iter()
                .map(|&(x, y)| Keypoint::visible(x, y))
                .collect(),
        )
    }

    #[test]
    fn identical_pose_has_unit_oks() {
        let gt = gt_from(&[(1.0, 2.0, 2), (3.0, 4.0, 0), (5.0, 6.0, 1)], 400.0);
        let pred = pred_from(&[(1.0, 2.0), (30.0, -4.0), (5.0, 6.0)]);
        let sig = SigmaTable::uniform(3).unwrap();
        assert_eq!(oks(&pred, &gt, &sig).unwrap(), 1.0);
    }

    #[test]
    fn single_keypoint_at_one_sigma() {
        // s = 10, k = 0.5 → d = s·k = 5
        let gt = gt_from(&[(0.0, 0.0, 2)], 100.0);
        let pred = pred_from(&[(3.0, 4.0)]);
        let sig = SigmaTable::new(vec![0.5]).unwrap();
        let v = oks(&pred, &gt, &sig).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn two_keypoints_one_exact_one_at_sigma() {
        let gt = gt_from(&[(10.0, 10.0, 2), (20.0, 20.0, 2)], 64.0);
        let sig = SigmaTable::new(vec![0.3, 0.25]).unwrap();
        // d₂ = s·k₂ = 8·0.25 = 2
        let pred = pred_from(&[(10.0, 10.0), (20.0, 22.0)]);
        let v = oks(&pred, &gt, &sig).unwrap();
        assert!((v - 0.803265).abs() < 1e-6);
    }

    #[test]
    fn oks_errors() {
        let gt = gt_from(&[(0.0, 0.0, 0), (1.0, 1.0, 0)], 10.0);
        let sig = SigmaTable::uniform(2).unwrap();
        let pred = pred_from(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(oks(&pred, &gt, &sig), Err(Error::NoVisibleKeypoints));
        let short = pred_from(&[(0.0, 0.0)]);
        assert!(matches!(
            oks(&short, &gt, &sig),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        let sig3 = SigmaTable::uniform(3).unwrap();
        assert!(matches!(
            oks(&pred, &gt, &sig3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn normalized_error_examples() {
        let sig = SigmaTable::new(vec![0.1]).unwrap();
        let gt = gt_from(&[(0.0, 0.0, 2)], 100.0);
        let u = normalized_errors(&pred_from(&[(0.0, 1.0)]), &gt, &sig).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12);
        let u0 = normalized_errors(&pred_from(&[(0.0, 0.0)]), &gt, &sig).unwrap();
        assert_eq!(u0, vec![0.0]);

        let sig17 = SigmaTable::uniform(17).unwrap();
        let pts: Vec<_> = (0..17).map(|i| (i as f64, 0.0, 2u8)).collect();
        let gt17 = gt_from(&pts, 100.0 * 100.0);
        let mut pred: Vec<_> = (0..17).map(|i| (i as f64, 0.0)).collect();
        pred[4].1 = 2.0;
        let u = normalized_errors(&pred_from(&pred), &gt17, &sig17).unwrap();
        assert!((u[4] - 0.34).abs() < 1e-12);
        assert!(u.iter().enumerate().all(|(i, &x)| i == 4 || x == 0.0));
    }

    #[test]
    fn invisible_keypoints_still_get_errors() {
        let sig = SigmaTable::uniform(2).unwrap();
        let gt = gt_from(&[(0.0, 0.0, 2), (0.0, 0.0, 0)], 4.0);
        let u = normalized_errors(&pred_from(&[(0.0, 0.0), (1.0, 0.0)]), &gt, &sig).unwrap();
        assert!((u[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn area_must_be_positive() {
        let pose = pred_from(&[(0.0, 0.0)]);
        assert!(matches!(
            GroundTruthInstance::new(0, pose.clone(), 0.0, None),
            Err(Error::DegenerateScale(_))
        ));
        assert!(GroundTruthInstance::new(0, pose, f64::NAN, None).is_err());
    }

    #[test]
    fn scale_is_root_area() {
        let gt = gt_from(&[(0.0, 0.0, 2)], 1234.5);
        assert!(((gt.scale() * gt.scale() - gt.area()) / gt.area()).abs() < 1e-9);
    }

    #[test]
    fn keypoint_rejects_non_finite() {
        assert!(Keypoint::new(f64::NAN, 0.0, Visibility::Visible).is_err());
        assert!(Keypoint::new(0.0, f64::INFINITY, Visibility::Visible).is_err());
        assert!(Visibility::try_from(3u8).is_err());
        assert!(Pose::from_flat(&[0.0, 0.0, 1.5]).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(SigmaTable::coco17().len(), 17);
        assert_eq!(SigmaTable::crowdpose14().len(), 14);
        assert!((SigmaTable::coco17().values()[0] - 0.052).abs() < 1e-15);
        let u = SigmaTable::uniform(17).unwrap();
        assert!(u.values().iter().all(|&k| k == 1.0 / 17.0));
        assert_eq!(
            "coco17".parse::<SigmaPreset>().unwrap(),
            SigmaPreset::Coco17
        );
        assert_eq!(
            "uniform(5)".parse::<SigmaPreset>().unwrap(),
            SigmaPreset::Uniform(Some(5))
        );
        assert_eq!(
            "uniform"
                .parse::<SigmaPreset>()
                .unwrap()
                .table(4)
                .unwrap()
                .len(),
            4
        );
        assert!("uniform(0)".parse::<SigmaPreset>().is_err());
        assert!("nope".parse::<SigmaPreset>().is_err());
        assert!(SigmaPreset::Coco17.table(14).is_err());
        assert!(SigmaTable::new(vec![0.1, 0.0]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let flat = vec![1.5, 2.0, 2.0, 0.0, 0.0, 0.0, 3.25, 4.0, 1.0];
        assert_eq!(Pose::from_flat(&flat).unwrap().to_flat(), flat);
    }

    /// Ground-truth keypoints, prediction offsets, area, per-keypoint k.
    type Scene = (Vec<(f64, f64, u8)>, Vec<(f64, f64)>, f64, Vec<f64>);

    fn scene() -> impl Strategy<Value = Scene> {
        (1usize..8).prop_flat_map(|k| {
            (
                prop::collection::vec((-500.0..500.0f64, -500.0..500.0f64, 0u8..3), k),
                prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), k),
                1.0..1e5f64,
                prop::collection::vec(0.01..0.5f64, k),
            )
        })
    }

    fn build(
        gt_pts: &[(f64, f64, u8)],
        offsets: &[(f64, f64)],
        area: f64,
        ks: &[f64],
    ) -> Option<(Pose, GroundTruthInstance, SigmaTable)> {
        if gt_pts.iter().all(|p| p.2 == 0) {
            return None;
        }
        let gt = gt_from(gt_pts, area);
        let pred = pred_from(
            &gt_pts
                .iter()
                .zip(offsets)
                .map(|(g, o)| (g.0 + o.0, g.1 + o.1))
                .collect::<Vec<_>>(),
        );
        Some((pred, gt, SigmaTable::new(ks.to_vec()).unwrap()))
    }

    proptest! {
        #[test]
        fn oks_in_unit_interval((g, o, a, k) in scene()) {
            if let Some((pred, gt, sig)) = build(&g, &o, a, &k) {
                let v = oks(&pred, &gt, &sig).unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn oks_recombines_from_normalized_errors((g, o, a, k) in scene()) {
            if let Some((pred, gt, sig)) = build(&g, &o, a, &k) {
                let u = normalized_errors(&pred, &gt, &sig).unwrap();
                let vis: Vec<f64> = u.iter().zip(gt.pose.keypoints())
                    .filter(|(_, kp)| kp.v.is_labeled())
                    .map(|(u, _)| (-u * u / 2.0).exp())
                    .collect();
                let recombined = vis.iter().sum::<f64>() / vis.len() as f64;
                prop_assert!((recombined - oks(&pred, &gt, &sig).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn oks_translation_and_scale_invariant((g, o, a, k) in scene(), tx in -1e3..1e3f64, ty in -1e3..1e3f64, c in 0.1..10.0f64) {
            if let Some((pred, gt, sig)) = build(&g, &o, a, &k) {
                let base = oks(&pred, &gt, &sig).unwrap();
                let shift = |p: &[(f64, f64, u8)]| p.iter().map(|&(x, y, v)| (x + tx, y + ty, v)).collect::<Vec<_>>();
                let gt_t: Vec<_> = shift(&g);
                let off_t: Vec<_> = o.clone();
                let (p2, g2, _) = build(&gt_t, &off_t, a, &k).unwrap();
                prop_assert!((oks(&p2, &g2, &sig).unwrap() - base).abs() < 1e-9);

                let gt_s: Vec<_> = g.iter().map(|&(x, y, v)| (x * c, y * c, v)).collect();
                let off_s: Vec<_> = o.iter().map(|&(x, y)| (x * c, y * c)).collect();
                let (p3, g3, _) = build(&gt_s, &off_s, a * c * c, &k).unwrap();
                prop_assert!((oks(&p3, &g3, &sig).unwrap() - base).abs() < 1e-9);
                let _ = pred;
            }
        }

        #[test]
        fn invisible_keypoint_does_not_change_oks((g, o, a, k) in scene(), x in -100.0..100.0f64, dx in -100.0..100.0f64) {
            if let Some((pred, gt, sig)) = build(&g, &o, a, &k) {
                let base = oks(&pred, &gt, &sig).unwrap();
                let mut g2 = g.clone();
                g2.push((x, x, 0));
                let mut o2 = o.clone();
                o2.push((dx, dx));
                let mut k2 = k.clone();
                k2.push(0.1);
                let (p2, gt2, s2) = build(&g2, &o2, a, &k2).unwrap();
                prop_assert_eq!(oks(&p2, &gt2, &s2).unwrap(), base);
            }
        }

        #[test]
        fn oks_monotone_in_distance((g, o, a, k) in scene(), idx in 0usize..8, grow in 1.0..5.0f64) {
            if let Some((pred, gt, sig)) = build(&g, &o, a, &k) {
                let i = idx % g.len();
                let base = oks(&pred, &gt, &sig).unwrap();
                let mut o2 = o.clone();
                o2[i] = (o[i].0 * grow, o[i].1 * grow);
                let (p2, g2, _) = build(&g, &o2, a, &k).unwrap();
                prop_assert!(oks(&p2, &g2, &sig).unwrap() <= base + 1e-15);
                let _ = (pred, gt);
            }
        }
    }
}
