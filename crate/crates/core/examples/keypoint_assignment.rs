//! Score-based label assignment on a synthetic scene: multi-positive Top-K
//! and the one-to-one head.

use posekit::assign::{assign_mah, assign_sah, AssignParams};
use posekit::synth::{generate_scene, SynthConfig};

fn main() -> posekit::Result<()> {
    let cfg = SynthConfig {
        seed: 11,
        noise_scale: 0.08,
        ..SynthConfig::default()
    };
    let scene = generate_scene(&cfg, 0)?;
    let sigmas = cfg.sigma_table()?;
    let params = AssignParams::default();
    println!(
        "{} instances, {} candidates, alpha {} beta {} k_top {}",
        scene.gts.len(),
        scene.cands.len(),
        params.alpha(),
        params.beta(),
        params.k_top()
    );

    let mah = assign_mah(&scene.gts, &scene.cands, &sigmas, &params)?;
    let sah = assign_sah(&scene.gts, &scene.cands, &sigmas, &params)?;
    for (g, gt) in scene.gts.iter().enumerate() {
        let picks: Vec<String> = mah.per_gt[g]
            .iter()
            .take(5)
            .map(|&(c, s)| {
                format!(
                    "{}[{},{}]:{:.3}",
                    scene.cands[c].level(),
                    scene.cands[c].row,
                    scene.cands[c].col,
                    s
                )
            })
            .collect();
        println!("gt {} MAH top-5 {}", gt.id, picks.join(" "));
        if let Some(&(c, s)) = sah.per_gt[g].first() {
            println!(
                "      SAH      {}[{},{}]:{:.3}",
                scene.cands[c].level(),
                scene.cands[c].row,
                scene.cands[c].col,
                s
            );
        }
    }
    println!(
        "MAH positives {}, SAH positives {}",
        mah.positives.len(),
        sah.positives.len()
    );
    Ok(())
}
