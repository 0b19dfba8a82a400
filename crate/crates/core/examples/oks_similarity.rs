//! Object Keypoint Similarity between a prediction and an annotated person,
//! and how it falls off as the prediction drifts.

use posekit::pose::{normalized_errors, oks, SigmaTable};
use posekit::{GroundTruthInstance, Keypoint, Pose, Visibility};

fn main() -> posekit::Result<()> {
    let sigmas = SigmaTable::coco17();
    let gt_kps: Vec<Keypoint> = (0..17)
        .map(|i| {
            let v = if i == 3 {
                Visibility::Unlabeled
            } else {
                Visibility::Visible
            };
            Keypoint::new(100.0 + 4.0 * i as f64, 80.0 + 9.0 * i as f64, v)
        })
        .collect::<posekit::Result<_>>()?;
    let gt = GroundTruthInstance::from_keypoint_box(1, Pose::new(gt_kps))?;
    println!("instance area {:.1}, scale {:.2}", gt.area(), gt.scale());

    for shift in [0.0, 2.0, 5.0, 10.0, 20.0] {
        let pred = Pose::new(
            gt.pose
                .keypoints()
                .iter()
                .map(|k| Keypoint::visible(k.x + shift, k.y))
                .collect(),
        );
        let u = normalized_errors(&pred, &gt, &sigmas)?;
        let u_max = u.iter().fold(0.0f64, |a, &b| a.max(b));
        println!(
            "shift {shift:>4} px: OKS {:.4}, max u {:.3}",
            oks(&pred, &gt, &sigmas)?,
            u_max
        );
    }
    Ok(())
}
