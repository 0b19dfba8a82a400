//! Synthetic TAE-vs-AP sweep across the two confidence regimes.
//!
//! `cargo run --release --example tae_vs_ap_sweep -- [scenes] [seed]`

use posekit::synth::{sweep_tae_vs_ap, SynthConfig};

fn main() -> posekit::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let base = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let noise = [0.0, 0.02, 0.05, 0.1];
    let report = sweep_tae_vs_ap(&base, &noise, scenes)?;

    print!("{}", report.to_tsv());
    for (noise, t) in &report.sign_tests {
        println!(
            "noise {noise}: box > keypoint in {} of {} untied scenes, p = {:.3e}",
            t.wins,
            t.wins + t.losses,
            t.p_value
        );
    }
    match report.spearman {
        Some(r) => println!("spearman(TAE, AP) = {r:.3}"),
        None => println!("spearman(TAE, AP) undefined"),
    }
    Ok(())
}
