//! Independent reference implementations shared by the integration tests
//! and the acceptance runner.

#![allow(dead_code)]

use posekit::eval::{AreaRange, Detection, ImageInstance};
use posekit::{GroundTruthInstance, Keypoint, Pose, SigmaTable, Visibility};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Best total over all partial injective maps rows → columns, by recursion.
pub fn brute_force_best(m: &[Vec<f64>]) -> f64 {
    fn go(m: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == m.len() {
            return 0.0;
        }
        let mut best = go(m, row + 1, used);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(m[row][c] + go(m, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    let cols = m.first().map_or(0, Vec::len);
    go(m, 0, &mut vec![false; cols])
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect()
}

/// Random injective selection, each row matched with probability 3/4.
pub fn random_selection(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Option<usize>> {
    let mut free: Vec<usize> = (0..cols).collect();
    (0..rows)
        .map(|_| {
            if free.is_empty() || rng.gen_bool(0.25) {
                None
            } else {
                Some(free.swap_remove(rng.gen_range(0..free.len())))
            }
        })
        .collect()
}

/// OKS written out directly from its definition.
pub fn naive_oks(pred: &Pose, gt: &GroundTruthInstance, k: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, g), &ki) in pred.keypoints().iter().zip(gt.pose.keypoints()).zip(k) {
        if g.v == Visibility::Unlabeled {
            continue;
        }
        let d2 = (p.x - g.x).powi(2) + (p.y - g.y).powi(2);
        sum += (-d2 / (2.0 * gt.area() * ki * ki)).exp();
        n += 1;
    }
    sum / n as f64
}

fn extent_area(p: &Pose) -> f64 {
    let xs = p.keypoints().iter().map(|k| k.x);
    let ys = p.keypoints().iter().map(|k| k.y);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
        (a.min(x), b.max(x))
    });
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
        (a.min(y), b.max(y))
    });
    (x1 - x0) * (y1 - y0)
}

/// `(ap, recall)` per area range and threshold; `None` without ground truth.
pub type BruteResult = Vec<Vec<(Option<f64>, Option<f64>)>>;

/// Reference COCO keypoint evaluation on small inputs.
///
/// Matching takes, among free ground truths reaching the threshold, the
/// best non-ignored one, else the best ignored one (later index wins ties).
/// Only non-ignored detections enter the precision-recall list, and the
/// interpolated precision at recall `r` is the maximum precision over
/// points with recall at least `r`.
pub fn brute_eval(
    images: &[u64],
    dets: &[Detection],
    gts: &[ImageInstance],
    k: &[f64],
    thresholds: &[f64],
    areas: &[AreaRange],
    max_dets: usize,
) -> BruteResult {
    areas
        .iter()
        .map(|range| {
            thresholds
                .iter()
                .map(|&thr| {
                    let thr = thr.min(1.0 - 1e-10);
                    // (score, image position, rank, is_tp)
                    let mut entries: Vec<(f64, usize, usize, bool)> = Vec::new();
                    let mut npig = 0usize;
                    for (pos, &img) in images.iter().enumerate() {
                        let g: Vec<&GroundTruthInstance> = gts
                            .iter()
                            .filter(|x| x.image_id == img && x.instance.num_labeled() > 0)
                            .map(|x| &x.instance)
                            .collect();
                        let ignored: Vec<bool> = g
                            .iter()
                            .map(|x| !(x.area() >= range.lo && x.area() < range.hi))
                            .collect();
                        npig += ignored.iter().filter(|&&i| !i).count();

                        let mut d: Vec<(usize, &Detection)> = dets
                            .iter()
                            .filter(|x| x.image_id == img)
                            .enumerate()
                            .collect();
                        d.sort_by(|a, b| {
                            b.1.score
                                .partial_cmp(&a.1.score)
                                .unwrap()
                                .then(a.0.cmp(&b.0))
                        });
                        d.truncate(max_dets);

                        let mut taken = vec![false; g.len()];
                        for (rank, (_, det)) in d.iter().enumerate() {
                            let pick = |want_ignored: bool, taken: &[bool]| -> Option<usize> {
                                let mut best: Option<(usize, f64)> = None;
                                for (j, gt) in g.iter().enumerate() {
                                    if taken[j] || ignored[j] != want_ignored {
                                        continue;
                                    }
                                    let o = naive_oks(&det.pose, gt, k);
                                    if o >= thr && best.is_none_or(|(_, b)| o >= b) {
                                        best = Some((j, o));
                                    }
                                }
                                best.map(|(j, _)| j)
                            };
                            let m = pick(false, &taken).or_else(|| pick(true, &taken));
                            let det_ignored = match m {
                                Some(j) => {
                                    taken[j] = true;
                                    ignored[j]
                                }
                                None => {
                                    let a = extent_area(&det.pose);
                                    !(a >= range.lo && a < range.hi)
                                }
                            };
                            if !det_ignored {
                                entries.push((det.score, pos, rank, m.is_some()));
                            }
                        }
                    }
                    if npig == 0 {
                        return (None, None);
                    }
                    entries.sort_by(|a, b| {
                        b.0.partial_cmp(&a.0)
                            .unwrap()
                            .then(a.1.cmp(&b.1))
                            .then(a.2.cmp(&b.2))
                    });
                    let mut points = Vec::new();
                    let (mut tp, mut fp) = (0usize, 0usize);
                    for e in &entries {
                        if e.3 {
                            tp += 1;
                        } else {
                            fp += 1;
                        }
                        points.push((tp as f64 / npig as f64, tp as f64 / (tp + fp) as f64));
                    }
                    let ap = (0..101)
                        .map(|i| {
                            let r = i as f64 / 100.0;
                            points
                                .iter()
                                .filter(|p| p.0 >= r)
                                .map(|p| p.1)
                                .fold(0.0f64, f64::max)
                        })
                        .sum::<f64>()
                        / 101.0;
                    (Some(ap), Some(tp as f64 / npig as f64))
                })
                .collect()
        })
        .collect()
}

pub const MICRO_SIGMAS: [f64; 4] = [0.1, 0.2, 0.15, 0.25];

/// Random evaluation input: up to three images, at most four ground truths
/// and six detections each.
pub struct MicroScene {
    pub images: Vec<u64>,
    pub dets: Vec<Detection>,
    pub gts: Vec<ImageInstance>,
}

pub fn micro_scene(rng: &mut ChaCha8Rng) -> MicroScene {
    let k = MICRO_SIGMAS.len();
    let n_images = rng.gen_range(1..=3);
    let images: Vec<u64> = (0..n_images).map(|i| 10 + i as u64).collect();
    let mut gts = Vec::new();
    let mut dets: Vec<Detection> = Vec::new();
    let mut next_id = 1;
    for &img in &images {
        let n_gt = if img == 10 {
            rng.gen_range(1..=4)
        } else {
            rng.gen_range(0..=4)
        };
        let mut image_gts = Vec::new();
        for _ in 0..n_gt {
            let area: f64 = rng.gen_range(400.0..16000.0);
            let s = area.sqrt();
            let (cx, cy) = (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0));
            let mut kps: Vec<Keypoint> = (0..k)
                .map(|_| {
                    let v = match rng.gen_range(0..5) {
                        0 => Visibility::Unlabeled,
                        1 => Visibility::Occluded,
                        _ => Visibility::Visible,
                    };
                    Keypoint {
                        x: cx + s * rng.gen_range(-0.5..0.5),
                        y: cy + s * rng.gen_range(-0.5..0.5),
                        v,
                    }
                })
                .collect();
            if kps.iter().all(|p| p.v == Visibility::Unlabeled) && rng.gen_bool(0.7) {
                kps[0].v = Visibility::Visible;
            }
            let inst = GroundTruthInstance::new(next_id, Pose::new(kps), area, None).unwrap();
            next_id += 1;
            image_gts.push(inst.clone());
            gts.push(ImageInstance {
                image_id: img,
                instance: inst,
            });
        }
        let n_det = rng.gen_range(0..=6);
        for _ in 0..n_det {
            let pose = if !image_gts.is_empty() && rng.gen_bool(0.8) {
                let g = &image_gts[rng.gen_range(0..image_gts.len())];
                let s = g.scale();
                let spread = rng.gen_range(0.0..0.3);
                Pose::new(
                    g.pose
                        .keypoints()
                        .iter()
                        .map(|p| {
                            Keypoint::visible(
                                p.x + s * spread * rng.gen_range(-1.0..1.0),
                                p.y + s * spread * rng.gen_range(-1.0..1.0),
                            )
                        })
                        .collect(),
                )
            } else {
                let (cx, cy) = (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0));
                let s = rng.gen_range(10.0..150.0);
                Pose::new(
                    (0..k)
                        .map(|_| {
                            Keypoint::visible(
                                cx + s * rng.gen_range(-0.5..0.5),
                                cy + s * rng.gen_range(-0.5..0.5),
                            )
                        })
                        .collect(),
                )
            };
            let score = if !dets.is_empty() && rng.gen_bool(0.15) {
                dets[rng.gen_range(0..dets.len())].score
            } else {
                rng.gen_range(0.0..1.0)
            };
            dets.push(Detection::new(img, pose, score).unwrap());
        }
    }
    MicroScene { images, dets, gts }
}

pub fn micro_sigmas() -> SigmaTable {
    SigmaTable::new(MICRO_SIGMAS.to_vec()).unwrap()
}
