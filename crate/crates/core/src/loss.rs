//! Keypoint regression losses defined on the normalized error `u = d/(s·k)`.
//!
//! Three similarity kernels are provided:
//!
//! | kind       | similarity `f(u)`                                   |
//! |------------|-----------------------------------------------------|
//! | `Gaussian` | `exp(-u²/2)`                                        |
//! | `Laplace`  | `exp(-u)`                                           |
//! | `Soks`     | `exp(-u²/2)` for `u² < 1`, `exp(-(2u-1)/2)` otherwise |
//!
//! The pose loss is `1 - mean_visible f(u_i)`. Smooth-OKS keeps the Gaussian
//! core for fine errors and switches to a Laplace tail past `u = 1`; value
//! and slope agree at the switch, so the kernel is C¹.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pose::{normalized_errors, GroundTruthInstance, Keypoint, Pose, SigmaTable, Visibility};

/// Probability clamp used by [`bce`].
pub const BCE_EPS: f64 = 1e-7;

/// Central-difference step used by [`finite_diff_check`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Gaussian,
    Laplace,
    Soks,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Gaussian, LossKind::Laplace, LossKind::Soks];

    /// Similarity `f(u)` for `u ≥ 0`.
    #[inline]
    pub fn similarity(self, u: f64) -> f64 {
        match self {
            LossKind::Gaussian => (-0.5 * u * u).exp(),
            LossKind::Laplace => (-u).exp(),
            LossKind::Soks => soks_unchecked(u),
        }
    }

    /// Derivative `f'(u)` for `u ≥ 0`. At the Smooth-OKS switch the Laplace
    /// branch is taken; both branches agree there.
    #[inline]
    pub fn similarity_deriv(self, u: f64) -> f64 {
        match self {
            LossKind::Gaussian => -u * (-0.5 * u * u).exp(),
            LossKind::Laplace => -(-u).exp(),
            LossKind::Soks => {
                if u * u < 1.0 {
                    -u * (-0.5 * u * u).exp()
                } else {
                    -(-(2.0 * u - 1.0) / 2.0).exp()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Gaussian => "gaussian",
            LossKind::Laplace => "laplace",
            LossKind::Soks => "soks",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(LossKind::Gaussian),
            "laplace" => Ok(LossKind::Laplace),
            "soks" => Ok(LossKind::Soks),
            other => Err(Error::InvalidParam(format!("unknown loss kind {other:?}"))),
        }
    }
}

#[inline]
fn soks_unchecked(u: f64) -> f64 {
    if u * u < 1.0 {
        (-0.5 * u * u).exp()
    } else {
        (-(2.0 * u - 1.0) / 2.0).exp()
    }
}

/// Smooth-OKS similarity of a single normalized error.
pub fn soks_scalar(u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::NonFinite(u));
    }
    if u < 0.0 {
        return Err(Error::InvalidParam(format!(
            "normalized error must be >= 0, got {u}"
        )));
    }
    Ok(soks_unchecked(u))
}

fn visible_mean(kind: LossKind, u: &[f64], gt: &GroundTruthInstance) -> Result<f64> {
    let (sum, n) = u
        .iter()
        .zip(gt.pose.keypoints())
        .filter(|(_, kp)| kp.v.is_labeled())
        .fold((0.0, 0usize), |(s, n), (&u, _)| {
            (s + kind.similarity(u), n + 1)
        });
    if n == 0 {
        return Err(Error::NoVisibleKeypoints);
    }
    Ok(sum / n as f64)
}

/// Pose-level Smooth-OKS: mean of [`soks_scalar`] over labeled keypoints.
pub fn soks_pose(pred: &Pose, gt: &GroundTruthInstance, sigmas: &SigmaTable) -> Result<f64> {
    let u = normalized_errors(pred, gt, sigmas)?;
    visible_mean(LossKind::Soks, &u, gt)
}

/// `1 - mean_visible f(u_i)` for the chosen kernel.
pub fn pose_loss(
    pred: &Pose,
    gt: &GroundTruthInstance,
    sigmas: &SigmaTable,
    kind: LossKind,
) -> Result<f64> {
    let u = normalized_errors(pred, gt, sigmas)?;
    Ok(1.0 - visible_mean(kind, &u, gt)?)
}

/// Analytic gradient of [`pose_loss`] with respect to every predicted
/// coordinate, as `(∂L/∂x_i, ∂L/∂y_i)` per keypoint.
///
/// Unlabeled keypoints and keypoints with `d_i = 0` contribute `(0, 0)`.
pub fn pose_loss_grad(
    pred: &Pose,
    gt: &GroundTruthInstance,
    sigmas: &SigmaTable,
    kind: LossKind,
) -> Result<Vec<(f64, f64)>> {
    let u = normalized_errors(pred, gt, sigmas)?;
    let n = gt.num_labeled();
    if n == 0 {
        return Err(Error::NoVisibleKeypoints);
    }
    let s = gt.scale();
    let inv_n = 1.0 / n as f64;
    Ok(pred
        .keypoints()
        .iter()
        .zip(gt.pose.keypoints())
        .zip(sigmas.values())
        .zip(&u)
        .map(|(((p, g), &k), &u)| {
            if !g.v.is_labeled() || u == 0.0 {
                return (0.0, 0.0);
            }
            let dx = p.x - g.x;
            let dy = p.y - g.y;
            let d = (dx * dx + dy * dy).sqrt();
            // ∂L/∂x = -(1/n) f'(u) ∂u/∂x,  ∂u/∂x = dx / (d·s·k)
            let c = -inv_n * kind.similarity_deriv(u) / (d * s * k);
            (c * dx, c * dy)
        })
        .collect())
}

/// Binary cross-entropy on a probability, clamped to `[ε, 1-ε]`.
pub fn bce(prob: f64, target: bool) -> f64 {
    let p = prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if target {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Binary cross-entropy with logits, `max(z, 0) - z·t + ln(1 + e^{-|z|})`.
pub fn bce_with_logits(logit: f64, target: bool) -> f64 {
    let t = if target { 1.0 } else { 0.0 };
    logit.max(0.0) - logit * t + (-logit.abs()).exp().ln_1p()
}

/// Mean BCE over a sequence of predicted probabilities and binary targets.
pub fn mean_bce(probs: &[f64], targets: &[bool]) -> Result<f64> {
    if probs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            found: probs.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::DegenerateInput("empty BCE input"));
    }
    Ok(probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| bce(p, t))
        .sum::<f64>()
        / probs.len() as f64)
}

/// Weights of the pose, visibility and confidence terms of the grid loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pose: f64,
    vis: f64,
    conf: f64,
}

impl LossWeights {
    pub fn new(pose: f64, vis: f64, conf: f64) -> Result<Self> {
        for w in [pose, vis, conf] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "loss weights must be positive, got {w}"
                )));
            }
        }
        Ok(LossWeights { pose, vis, conf })
    }

    pub fn pose(&self) -> f64 {
        self.pose
    }

    pub fn vis(&self) -> f64 {
        self.vis
    }

    pub fn conf(&self) -> f64 {
        self.conf
    }
}

impl Default for LossWeights {
    /// 15 : 1 : 1.
    fn default() -> Self {
        LossWeights {
            pose: 15.0,
            vis: 1.0,
            conf: 1.0,
        }
    }
}

pub fn grid_loss(l_pose: f64, l_vis: f64, l_conf: f64, weights: &LossWeights) -> f64 {
    weights.pose * l_pose + weights.vis * l_vis + weights.conf * l_conf
}

/// Location of the worst gradient mismatch found by [`finite_diff_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GradIndex {
    pub trial: usize,
    pub keypoint: usize,
    /// 0 for x, 1 for y.
    pub axis: usize,
}

impl fmt::Display for GradIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axis = if self.axis == 0 { 'x' } else { 'y' };
        write!(f, "{}:{}:{}", self.trial, self.keypoint, axis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub kind: LossKind,
    pub max_rel_error: f64,
    pub worst_index: GradIndex,
    /// Number of gradient components compared.
    pub num_points: usize,
    /// Trials dropped because they touched a non-smooth or degenerate point.
    pub excluded_trials: usize,
}

/// Random configuration used by the gradient checker: a COCO-sized pose
/// with a random visibility mask and per-keypoint normalized errors drawn
/// from `[0, 3]`.
pub(crate) fn random_loss_config(rng: &mut ChaCha8Rng) -> (Pose, GroundTruthInstance, SigmaTable) {
    let sigmas = SigmaTable::coco17();
    let k = sigmas.len();
    let scale: f64 = rng.gen_range(20.0..200.0);
    let cx: f64 = rng.gen_range(0.0..640.0);
    let cy: f64 = rng.gen_range(0.0..640.0);
    let mut gt_kps = Vec::with_capacity(k);
    let mut pred_kps = Vec::with_capacity(k);
    for &kk in sigmas.values() {
        let gx = cx + rng.gen_range(-0.5..0.5) * scale;
        let gy = cy + rng.gen_range(-0.5..0.5) * scale;
        let v = match rng.gen_range(0..4) {
            0 => Visibility::Unlabeled,
            1 => Visibility::Occluded,
            _ => Visibility::Visible,
        };
        let u: f64 = rng.gen_range(0.0..3.0);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let d = u * scale * kk;
        gt_kps.push(Keypoint { x: gx, y: gy, v });
        pred_kps.push(Keypoint::visible(
            gx + d * theta.cos(),
            gy + d * theta.sin(),
        ));
    }
    if gt_kps.iter().all(|kp| !kp.v.is_labeled()) {
        gt_kps[0].v = Visibility::Visible;
    }
    let gt =
        GroundTruthInstance::new(0, Pose::new(gt_kps), scale * scale, None).expect("positive area");
    (Pose::new(pred_kps), gt, sigmas)
}

struct TrialOutcome {
    worst: f64,
    index: GradIndex,
    points: usize,
}

/// Exclusion regions of the gradient checker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Trials with a labeled keypoint closer than this (pixels) are dropped.
    pub min_dist: f64,
    /// Smooth-OKS trials with `|u² - 1|` below this are dropped.
    pub branch_band: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            min_dist: 1e-8,
            branch_band: 1e-4,
        }
    }
}

fn check_trial(
    kind: LossKind,
    trial: usize,
    pred: &Pose,
    gt: &GroundTruthInstance,
    sigmas: &SigmaTable,
    opts: &GradCheckOptions,
) -> Option<TrialOutcome> {
    let u = normalized_errors(pred, gt, sigmas).ok()?;
    for ((p, g), &ui) in pred.keypoints().iter().zip(gt.pose.keypoints()).zip(&u) {
        if !g.v.is_labeled() {
            continue;
        }
        if p.dist_sq(g).sqrt() < opts.min_dist {
            return None;
        }
        if kind == LossKind::Soks && (ui * ui - 1.0).abs() < opts.branch_band {
            return None;
        }
    }

    let analytic = pose_loss_grad(pred, gt, sigmas, kind).ok()?;
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = pred.clone();
    for i in 0..pred.len() {
        let mut comp = [0.0; 2];
        for (axis, slot) in comp.iter_mut().enumerate() {
            let orig = probe.keypoints()[i];
            let set = |probe: &mut Pose, delta: f64| {
                let kp = &mut probe.keypoints_mut()[i];
                if axis == 0 {
                    kp.x = orig.x + delta;
                } else {
                    kp.y = orig.y + delta;
                }
            };
            set(&mut probe, FD_STEP);
            let plus = pose_loss(&probe, gt, sigmas, kind).ok()?;
            set(&mut probe, -FD_STEP);
            let minus = pose_loss(&probe, gt, sigmas, kind).ok()?;
            probe.keypoints_mut()[i] = orig;
            *slot = (plus - minus) / (2.0 * FD_STEP);
        }
        numeric.push((comp[0], comp[1]));
    }

    // Errors are relative to the largest gradient component of the trial.
    let norm = analytic
        .iter()
        .chain(&numeric)
        .flat_map(|&(x, y)| [x.abs(), y.abs()])
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut out = TrialOutcome {
        worst: 0.0,
        index: GradIndex {
            trial,
            keypoint: 0,
            axis: 0,
        },
        points: 0,
    };
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (axis, (av, nv)) in [(a.0, n.0), (a.1, n.1)].into_iter().enumerate() {
            let rel = (av - nv).abs() / norm;
            out.points += 1;
            if rel > out.worst {
                out.worst = rel;
                out.index = GradIndex {
                    trial,
                    keypoint: i,
                    axis,
                };
            }
        }
    }
    Some(out)
}

/// Compares analytic gradients of [`pose_loss`] against central differences
/// over `trials` seeded random configurations.
///
/// Trials with a labeled keypoint at `d < 1e-8`, or (for Smooth-OKS) with
/// `|u² - 1| < 1e-4`, are excluded. Each trial draws from its own stream of
/// the seeded generator, so the report does not depend on thread count.
pub fn finite_diff_check(kind: LossKind, trials: usize, seed: u64) -> Result<GradCheckReport> {
    finite_diff_check_with(kind, trials, seed, &GradCheckOptions::default())
}

/// [`finite_diff_check`] with explicit exclusion regions.
///
/// The Laplace kernel is a cone at `d = 0`, so central differences lose
/// accuracy once `d` approaches the step; a wider `min_dist` isolates that.
pub fn finite_diff_check_with(
    kind: LossKind,
    trials: usize,
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if trials == 0 {
        return Err(Error::InvalidParam("trial count must be >= 1".into()));
    }
    let outcomes: Vec<Option<TrialOutcome>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let (pred, gt, sigmas) = random_loss_config(&mut rng);
            check_trial(kind, t, &pred, &gt, &sigmas, opts)
        })
        .collect();
    Ok(reduce_outcomes(kind, outcomes))
}

/// Gradient check on caller-supplied configurations.
pub fn finite_diff_check_on(
    kind: LossKind,
    configs: &[(Pose, GroundTruthInstance, SigmaTable)],
) -> GradCheckReport {
    let outcomes = configs
        .iter()
        .enumerate()
        .map(|(t, (p, g, s))| check_trial(kind, t, p, g, s, &GradCheckOptions::default()))
        .collect();
    reduce_outcomes(kind, outcomes)
}

fn reduce_outcomes(kind: LossKind, outcomes: Vec<Option<TrialOutcome>>) -> GradCheckReport {
    let mut report = GradCheckReport {
        kind,
        max_rel_error: 0.0,
        worst_index: GradIndex::default(),
        num_points: 0,
        excluded_trials: 0,
    };
    for o in outcomes {
        match o {
            None => report.excluded_trials += 1,
            Some(o) => {
                report.num_points += o.points;
                if o.worst > report.max_rel_error {
                    report.max_rel_error = o.worst;
                    report.worst_index = o.index;
                }
            }
        }
    }
    report
}
