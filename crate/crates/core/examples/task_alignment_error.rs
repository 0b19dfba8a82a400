//! Task Alignment Error: the worked two-by-two case and a synthetic scene
//! under both confidence regimes.

use posekit::alignment::{optimal_match, tae, OksMatrix};
use posekit::synth::{generate_scene, ConfRegime, Selector, SynthConfig};

fn main() -> posekit::Result<()> {
    let m = OksMatrix::from_rows(&[vec![0.9, 0.4], vec![0.8, 0.2]])?;
    let best = optimal_match(&m);
    println!(
        "optimal mapping {:?}, total OKS {:.2}",
        best.mapping, best.total_oks
    );
    println!(
        "TAE of the diagonal selection: {:.3}",
        tae(&m, &[Some(0), Some(1)])?
    );

    let base = SynthConfig {
        seed: 5,
        noise_scale: 0.05,
        ..SynthConfig::default()
    };
    let sigmas = base.sigma_table()?;
    for regime in ConfRegime::ALL {
        let cfg = base.with_regime(regime);
        let mut total = 0.0;
        let n = 20;
        for i in 0..n {
            let scene = generate_scene(&cfg, i)?;
            let sel = scene.select(Selector::OwnerArgmax, &sigmas)?;
            total += scene.tae(&sel, &sigmas)?;
        }
        println!(
            "{regime:<16} mean TAE over {n} scenes: {:.4}",
            total / n as f64
        );
    }
    Ok(())
}
