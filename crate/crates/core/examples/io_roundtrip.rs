//! Writes a synthetic dataset, results and candidate dump to a temporary
//! directory and reads them back.

use posekit::io;
use posekit::synth::{generate_scenes, to_candidate_set, to_dataset, Selector, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SynthConfig {
        seed: 1,
        ..SynthConfig::default()
    };
    let sigmas = cfg.sigma_table()?;
    let scenes = generate_scenes(&cfg, 4)?;
    let dir = std::env::temp_dir().join(format!("posekit-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    let ds = to_dataset(&scenes, cfg.num_keypoints);
    io::save_dataset(&ds, dir.join("gt.json"))?;
    let back = io::load_dataset(dir.join("gt.json"))?;
    println!(
        "dataset: {} annotations, identical after reload: {}",
        back.annotations.len(),
        back == ds
    );

    let mut dets = Vec::new();
    for s in &scenes {
        dets.extend(s.detections(&s.select(Selector::OwnerArgmax, &sigmas)?));
    }
    let rs = io::ResultSet::from_detections(&dets);
    io::save_results(&rs, dir.join("preds.json"))?;
    println!(
        "results identical after reload: {}",
        io::load_results(dir.join("preds.json"))? == rs
    );

    let cands = to_candidate_set(&scenes);
    io::save_candidates(&cands, dir.join("cands.txt"))?;
    let back = io::load_candidates(dir.join("cands.txt"))?;
    println!(
        "candidates: {} lines, identical after reload: {}",
        back.values().map(Vec::len).sum::<usize>(),
        back == cands
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
