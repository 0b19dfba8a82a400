//! OKS-based NMS versus NMS-free confidence selection on dense candidates.

use posekit::suppression::{conf_select, oks_nms, ScoredPose};
use posekit::synth::{generate_scene, SynthConfig};

fn main() -> posekit::Result<()> {
    let cfg = SynthConfig {
        seed: 3,
        num_instances: (3, 3),
        ..SynthConfig::default()
    };
    let scene = generate_scene(&cfg, 0)?;
    let sigmas = cfg.sigma_table()?;
    let cands: Vec<ScoredPose> = scene
        .cands
        .iter()
        .filter(|c| c.conf() > 0.3)
        .map(|c| ScoredPose::from_extent(c.pose.clone(), c.conf()))
        .collect::<posekit::Result<_>>()?;
    println!(
        "{} instances, {} candidates above 0.3",
        scene.gts.len(),
        cands.len()
    );

    for thr in [0.4, 0.5, 0.6, 0.7, 0.8] {
        println!(
            "oks_nms thr {thr}: kept {}",
            oks_nms(&cands, &sigmas, thr)?.len()
        );
    }
    for thr in [0.5, 0.8, 0.9] {
        println!(
            "conf_select thr {thr}: kept {}",
            conf_select(&cands, thr)?.len()
        );
    }
    Ok(())
}
