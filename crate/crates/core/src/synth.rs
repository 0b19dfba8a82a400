//! Seeded synthetic scenes with dense grid candidates.
//!
//! Ground-truth people are a canonical template pose, jittered, scaled,
//! rotated and translated. Every cell of every configured grid level emits a
//! candidate: the pose of the ground truth whose center is nearest to the
//! cell, plus Gaussian coordinate noise with standard deviation
//! `noise_scale · s · (0.5 + ρ)`, where `ρ` is the cell-to-center distance in
//! units of the instance scale `s`.
//!
//! Candidate confidence follows one of two regimes:
//!
//! * keypoint-driven: `clamp(OKS + conf_noise·η, 0, 1)`;
//! * box-driven: `clamp(IoU + conf_noise·η, 0, 1)`, where the IoU is between
//!   the ground-truth keypoint box and an independently perturbed copy.
//!
//! `η ~ U[-1, 1]`. Both regimes consume the same random draws, so scenes
//! generated with the same `(seed, scene_index)` are paired across regimes
//! and noise levels.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::alignment::{optimal_match, spearman, tae_against, OksMatrix, Selection};
use crate::assign::{assign_sah, AssignParams, GridCandidate, Level};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Detection, EvalParams, EvalSummary, ImageInstance};
use crate::io::{Annotation, CandidateSet, Category, Dataset, ImageInfo, SelectionEntry};
use crate::pose::{oks, GroundTruthInstance, Keypoint, Pose, SigmaPreset, SigmaTable, Visibility};

/// How candidate confidence relates to localization quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConfRegime {
    KeypointDriven,
    BoxDriven,
}

impl ConfRegime {
    pub const ALL: [ConfRegime; 2] = [ConfRegime::KeypointDriven, ConfRegime::BoxDriven];

    pub fn name(self) -> &'static str {
        match self {
            ConfRegime::KeypointDriven => "keypoint_driven",
            ConfRegime::BoxDriven => "box_driven",
        }
    }
}

impl fmt::Display for ConfRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConfRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "keypoint_driven" | "keypoint" | "kp" => Ok(ConfRegime::KeypointDriven),
            "box_driven" | "box" => Ok(ConfRegime::BoxDriven),
            _ => Err(Error::InvalidParam(format!(
                "regime must be keypoint_driven or box_driven, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Side of the square image in pixels.
    pub image_size: u32,
    /// Inclusive range of instances per scene.
    pub num_instances: (usize, usize),
    pub num_keypoints: usize,
    pub sigmas: SigmaPreset,
    /// Coordinate noise as a fraction of instance scale.
    pub noise_scale: f64,
    pub regime: ConfRegime,
    pub conf_noise: f64,
    pub levels: Vec<Level>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            image_size: 256,
            num_instances: (1, 4),
            num_keypoints: 17,
            sigmas: SigmaPreset::Coco17,
            noise_scale: 0.05,
            regime: ConfRegime::KeypointDriven,
            conf_noise: 0.05,
            levels: vec![Level::P3, Level::P4, Level::P5],
        }
    }
}

/// Minimum distance between instance centers in pixels. Keeps every
/// instance the nearest one for the cells around its own center.
const MIN_CENTER_GAP: f64 = 64.0;
const CENTER_TRIES: usize = 200;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "noise_scale {} must be >= 0",
                self.noise_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.conf_noise) {
            return Err(Error::InvalidParam(format!(
                "conf_noise {} outside [0, 1]",
                self.conf_noise
            )));
        }
        let (lo, hi) = self.num_instances;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidParam(format!(
                "instance range {lo}..={hi} is empty"
            )));
        }
        if self.num_keypoints < 2 {
            return Err(Error::InvalidParam("need at least two keypoints".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidParam("need at least one grid level".into()));
        }
        if self.image_size < 128 {
            return Err(Error::InvalidParam(
                "image_size must be at least 128".into(),
            ));
        }
        self.sigmas.table(self.num_keypoints)?;
        Ok(())
    }

    pub fn sigma_table(&self) -> Result<SigmaTable> {
        self.sigmas.table(self.num_keypoints)
    }

    pub fn with_noise(&self, noise_scale: f64) -> Self {
        SynthConfig {
            noise_scale,
            ..self.clone()
        }
    }

    pub fn with_regime(&self, regime: ConfRegime) -> Self {
        SynthConfig {
            regime,
            ..self.clone()
        }
    }
}

/// One generated image.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: u64,
    pub image_size: u32,
    pub gts: Vec<GroundTruthInstance>,
    pub cands: Vec<GridCandidate>,
    /// Index of the ground truth each candidate was generated from.
    pub owner: Vec<usize>,
}

const COCO17_TEMPLATE: [(f64, f64); 17] = [
    (0.00, -0.40),
    (0.03, -0.43),
    (-0.03, -0.43),
    (0.07, -0.41),
    (-0.07, -0.41),
    (0.14, -0.28),
    (-0.14, -0.28),
    (0.19, -0.10),
    (-0.19, -0.10),
    (0.21, 0.06),
    (-0.21, 0.06),
    (0.09, 0.04),
    (-0.09, 0.04),
    (0.10, 0.27),
    (-0.10, 0.27),
    (0.10, 0.50),
    (-0.10, 0.50),
];

const CROWDPOSE14_TEMPLATE: [(f64, f64); 14] = [
    (0.14, -0.28),
    (-0.14, -0.28),
    (0.19, -0.10),
    (-0.19, -0.10),
    (0.21, 0.06),
    (-0.21, 0.06),
    (0.09, 0.04),
    (-0.09, 0.04),
    (0.10, 0.27),
    (-0.10, 0.27),
    (0.10, 0.50),
    (-0.10, 0.50),
    (0.00, -0.47),
    (0.00, -0.32),
];

/// Template in units of person height, centered at the origin.
pub fn template(num_keypoints: usize) -> Vec<(f64, f64)> {
    match num_keypoints {
        17 => COCO17_TEMPLATE.to_vec(),
        14 => CROWDPOSE14_TEMPLATE.to_vec(),
        k => (0..k)
            .map(|i| {
                let t = i as f64 / (k - 1) as f64;
                (0.15 * (i as f64 * 1.7).sin(), t - 0.5)
            })
            .collect(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn scene_rng(seed: u64, scene_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scene_index);
    rng
}

/// Ground truth plus the full (unmasked) template pose it was cut from.
struct Person {
    gt: GroundTruthInstance,
    full: Vec<(f64, f64)>,
    center: (f64, f64),
    bbox: (f64, f64, f64, f64),
}

fn sample_centers(rng: &mut ChaCha8Rng, n: usize, size: f64) -> Vec<(f64, f64)> {
    let (lo, hi) = (0.2 * size, 0.8 * size);
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..CENTER_TRIES {
            let c = (rng.gen_range(lo..hi), rng.gen_range(lo..hi));
            let clear = centers
                .iter()
                .all(|p| (p.0 - c.0).hypot(p.1 - c.1) >= MIN_CENTER_GAP);
            if clear {
                centers.push(c);
                break;
            }
        }
    }
    centers
}

fn sample_person(
    rng: &mut ChaCha8Rng,
    id: u64,
    center: (f64, f64),
    size: f64,
    tpl: &[(f64, f64)],
) -> Result<Person> {
    let height = rng.gen_range(0.3..0.7) * size;
    let theta = rng.gen_range(-0.35..0.35f64);
    let (sin, cos) = theta.sin_cos();
    let full: Vec<(f64, f64)> = tpl
        .iter()
        .map(|&(tx, ty)| {
            let x = tx + 0.015 * normal(rng);
            let y = ty + 0.015 * normal(rng);
            (
                center.0 + height * (cos * x - sin * y),
                center.1 + height * (sin * x + cos * y),
            )
        })
        .collect();
    let mut flags: Vec<Visibility> = (0..tpl.len())
        .map(|_| {
            let r: f64 = rng.gen();
            if r < 0.85 {
                Visibility::Visible
            } else if r < 0.90 {
                Visibility::Occluded
            } else {
                Visibility::Unlabeled
            }
        })
        .collect();
    if flags.iter().filter(|v| v.is_labeled()).count() < 3 {
        flags.iter_mut().for_each(|v| *v = Visibility::Visible);
    }
    // COCO stores unlabeled keypoints as (0, 0, 0).
    let kps: Vec<Keypoint> = full
        .iter()
        .zip(&flags)
        .map(|(&(x, y), &v)| match v {
            Visibility::Unlabeled => Keypoint { x: 0.0, y: 0.0, v },
            _ => Keypoint { x, y, v },
        })
        .collect();
    let gt = GroundTruthInstance::from_keypoint_box(id, Pose::new(kps))?;
    let [x, y, w, h] = gt.bbox.expect("keypoint box");
    Ok(Person {
        gt,
        full,
        center,
        bbox: (x, y, x + w, y + h),
    })
}

fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let iw = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let ih = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    let inter = iw * ih;
    let area = |r: (f64, f64, f64, f64)| (r.2 - r.0).max(0.0) * (r.3 - r.1).max(0.0);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Generates scene `scene_index`. Output depends only on `(cfg, scene_index)`.
pub fn generate_scene(cfg: &SynthConfig, scene_index: u64) -> Result<Scene> {
    cfg.validate()?;
    let sigmas = cfg.sigma_table()?;
    let mut rng = scene_rng(cfg.seed, scene_index);
    let size = f64::from(cfg.image_size);
    let tpl = template(cfg.num_keypoints);

    let n = rng.gen_range(cfg.num_instances.0..=cfg.num_instances.1);
    let centers = sample_centers(&mut rng, n, size);
    let people: Vec<Person> = centers
        .iter()
        .enumerate()
        .map(|(i, &c)| sample_person(&mut rng, scene_index * 1000 + i as u64 + 1, c, size, &tpl))
        .collect::<Result<_>>()?;

    let mut levels = cfg.levels.clone();
    levels.sort();
    levels.dedup();
    let mut cands = Vec::new();
    let mut owner = Vec::new();
    for level in levels {
        let stride = f64::from(level.stride());
        let cells = cfg.image_size.div_ceil(level.stride());
        for row in 0..cells {
            for col in 0..cells {
                let c = (
                    (f64::from(col) + 0.5) * stride,
                    (f64::from(row) + 0.5) * stride,
                );
                let (g, dist) = people
                    .iter()
                    .map(|p| (p.center.0 - c.0).hypot(p.center.1 - c.1))
                    .enumerate()
                    .fold(
                        (0, f64::INFINITY),
                        |best, (i, d)| if d < best.1 { (i, d) } else { best },
                    );
                let person = &people[g];
                let s = person.gt.scale();
                let sd = cfg.noise_scale * s * (0.5 + dist / s);

                let kps: Vec<Keypoint> = person
                    .full
                    .iter()
                    .map(|&(x, y)| {
                        Keypoint::visible(x + sd * normal(&mut rng), y + sd * normal(&mut rng))
                    })
                    .collect();
                let b = person.bbox;
                let pred_box = (
                    b.0 + sd * normal(&mut rng),
                    b.1 + sd * normal(&mut rng),
                    b.2 + sd * normal(&mut rng),
                    b.3 + sd * normal(&mut rng),
                );
                let eta: f64 = rng.gen_range(-1.0..=1.0);

                let pose = Pose::new(kps);
                let quality = match cfg.regime {
                    ConfRegime::KeypointDriven => oks(&pose, &person.gt, &sigmas)?,
                    ConfRegime::BoxDriven => iou(b, pred_box),
                };
                let conf = (quality + cfg.conf_noise * eta).clamp(0.0, 1.0);
                let vis_probs = person
                    .gt
                    .pose
                    .keypoints()
                    .iter()
                    .map(|k| if k.v.is_labeled() { 0.9 } else { 0.1 })
                    .collect();
                cands.push(GridCandidate::new(level, row, col, conf, pose, vis_probs)?);
                owner.push(g);
            }
        }
    }

    Ok(Scene {
        image_id: scene_index,
        image_size: cfg.image_size,
        gts: people.into_iter().map(|p| p.gt).collect(),
        cands,
        owner,
    })
}

/// Generates scenes `0..count` in parallel.
pub fn generate_scenes(cfg: &SynthConfig, count: usize) -> Result<Vec<Scene>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_scene(cfg, i))
        .collect()
}

/// How one prediction per instance is chosen from the dense candidates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Selector {
    /// Highest-confidence candidate among those generated from the instance,
    /// the NMS-free inference rule.
    #[default]
    OwnerArgmax,
    /// Single-assignment head positives.
    Sah(AssignParams),
}

impl Scene {
    pub fn poses(&self) -> Vec<Pose> {
        self.cands.iter().map(|c| c.pose.clone()).collect()
    }

    pub fn select(&self, selector: Selector, sigmas: &SigmaTable) -> Result<Selection> {
        match selector {
            Selector::OwnerArgmax => Ok((0..self.gts.len())
                .map(|g| {
                    self.owner
                        .iter()
                        .enumerate()
                        .filter(|&(_, &o)| o == g)
                        .map(|(c, _)| c)
                        .fold(None, |best: Option<usize>, c| match best {
                            Some(b) if self.cands[b].conf() >= self.cands[c].conf() => Some(b),
                            _ => Some(c),
                        })
                })
                .collect()),
            Selector::Sah(params) => {
                Ok(assign_sah(&self.gts, &self.cands, sigmas, &params)?.top_candidates())
            }
        }
    }

    pub fn oks_matrix(&self, sigmas: &SigmaTable) -> Result<OksMatrix> {
        OksMatrix::from_poses(&self.gts, &self.poses(), sigmas)
    }

    pub fn tae(&self, selection: &[Option<usize>], sigmas: &SigmaTable) -> Result<f64> {
        let m = self.oks_matrix(sigmas)?;
        tae_against(&m, &optimal_match(&m), selection)
    }

    /// Selected candidates as detections scored by their confidence.
    pub fn detections(&self, selection: &[Option<usize>]) -> Vec<Detection> {
        selection
            .iter()
            .flatten()
            .map(|&c| Detection {
                image_id: self.image_id,
                pose: self.cands[c].pose.clone(),
                score: self.cands[c].conf(),
                matched_gt: None,
            })
            .collect()
    }

    pub fn instances(&self) -> Vec<ImageInstance> {
        self.gts
            .iter()
            .map(|g| ImageInstance {
                image_id: self.image_id,
                instance: g.clone(),
            })
            .collect()
    }
}

/// TAE and evaluation of one configuration over scenes `0..num_scenes`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeRun {
    pub per_scene_tae: Vec<f64>,
    pub mean_tae: f64,
    pub summary: EvalSummary,
}

pub fn run_config(cfg: &SynthConfig, num_scenes: usize, selector: Selector) -> Result<RegimeRun> {
    if num_scenes == 0 {
        return Err(Error::InvalidParam("need at least one scene".into()));
    }
    let sigmas = cfg.sigma_table()?;
    let per_scene: Vec<(f64, Vec<Detection>, Vec<ImageInstance>)> = (0..num_scenes as u64)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene(cfg, i)?;
            let sel = scene.select(selector, &sigmas)?;
            Ok((
                scene.tae(&sel, &sigmas)?,
                scene.detections(&sel),
                scene.instances(),
            ))
        })
        .collect::<Result<_>>()?;
    let per_scene_tae: Vec<f64> = per_scene.iter().map(|r| r.0).collect();
    let mean_tae = per_scene_tae.iter().sum::<f64>() / num_scenes as f64;
    let dets: Vec<Detection> = per_scene.iter().flat_map(|r| r.1.iter().cloned()).collect();
    let gts: Vec<ImageInstance> = per_scene.into_iter().flat_map(|r| r.2).collect();
    let summary = evaluate(&dets, &gts, &sigmas, &EvalParams::default())?;
    Ok(RegimeRun {
        per_scene_tae,
        mean_tae,
        summary,
    })
}

/// Paired one-sided sign test of `a > b`. Ties are dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    /// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`; 1 without untied pairs.
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (mut wins, mut losses, mut ties) = (0u64, 0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Greater => wins += 1,
            std::cmp::Ordering::Less => losses += 1,
            std::cmp::Ordering::Equal => ties += 1,
        }
    }
    let n = wins + losses;
    let p_value = if n == 0 || wins == 0 {
        1.0
    } else {
        let bin = Binomial::new(0.5, n).map_err(|e| Error::InvalidParam(e.to_string()))?;
        bin.sf(wins - 1)
    };
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub regime: ConfRegime,
    pub noise: f64,
    pub mean_tae: f64,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Spearman correlation of mean TAE against AP over all rows.
    pub spearman: Option<f64>,
    /// Per noise level, box-driven vs keypoint-driven per-scene TAE.
    pub sign_tests: Vec<(f64, SignTest)>,
}

impl SweepReport {
    /// Delimited table, one row per configuration.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("regime\tnoise\tmean_tae\tap\n");
        for r in &self.rows {
            let ap = r.ap.map_or("nan".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{}\n",
                r.regime, r.noise, r.mean_tae, ap
            ));
        }
        out
    }
}

/// Runs every regime at every noise level on the same scene indices.
pub fn sweep_tae_vs_ap(
    base: &SynthConfig,
    noise_levels: &[f64],
    num_scenes: usize,
) -> Result<SweepReport> {
    if noise_levels.len() < 3 {
        return Err(Error::InvalidParam(
            "sweep needs at least three noise levels".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut sign_tests = Vec::new();
    for &noise in noise_levels {
        let mut runs = Vec::new();
        for regime in ConfRegime::ALL {
            let cfg = base.with_noise(noise).with_regime(regime);
            let run = run_config(&cfg, num_scenes, Selector::OwnerArgmax)?;
            log::info!("sweep {regime} noise {noise}: mean TAE {:.4}", run.mean_tae);
            rows.push(SweepRow {
                regime,
                noise,
                mean_tae: run.mean_tae,
                ap: run.summary.ap,
            });
            runs.push(run);
        }
        sign_tests.push((
            noise,
            sign_test(&runs[1].per_scene_tae, &runs[0].per_scene_tae)?,
        ));
    }
    let (t, a): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.ap.map(|ap| (r.mean_tae, ap)))
        .unzip();
    let spearman = spearman(&t, &a).ok();
    Ok(SweepReport {
        rows,
        spearman,
        sign_tests,
    })
}

/// Ground truths of `scenes` as a COCO keypoint document.
pub fn to_dataset(scenes: &[Scene], num_keypoints: usize) -> Dataset {
    let images = scenes
        .iter()
        .map(|s| ImageInfo {
            id: s.image_id,
            width: s.image_size,
            height: s.image_size,
            file_name: None,
        })
        .collect();
    let annotations = scenes
        .iter()
        .flat_map(|s| {
            s.gts.iter().map(move |g| Annotation {
                id: g.id,
                image_id: s.image_id,
                category_id: 1,
                keypoints: g.pose.to_flat(),
                num_keypoints: Some(g.num_labeled() as u32),
                area: g.area(),
                bbox: g.bbox,
                iscrowd: 0,
            })
        })
        .collect();
    Dataset {
        images,
        annotations,
        categories: vec![Category::person(num_keypoints)],
    }
}

/// All candidates of `scenes`, keyed by image.
pub fn to_candidate_set(scenes: &[Scene]) -> CandidateSet {
    scenes
        .iter()
        .map(|s| (s.image_id, s.cands.clone()))
        .collect()
}

/// Selections as file entries; `pred_index` indexes the image's candidates.
pub fn to_selection_entries(scene: &Scene, selection: &[Option<usize>]) -> Vec<SelectionEntry> {
    selection
        .iter()
        .zip(&scene.gts)
        .filter_map(|(c, g)| {
            c.map(|c| SelectionEntry {
                image_id: scene.image_id,
                gt_id: g.id,
                pred_index: c,
            })
        })
        .collect()
}
