//! Similarity and loss curves of the three pose-loss kernels, plus a
//! gradient check against central differences.

use posekit::loss::{finite_diff_check, LossKind};

fn main() -> posekit::Result<()> {
    println!(
        "{:>5} {:>10} {:>10} {:>10}",
        "u", "gaussian", "laplace", "soks"
    );
    for i in 0..=12 {
        let u = i as f64 * 0.25;
        let row: Vec<String> = LossKind::ALL
            .iter()
            .map(|k| format!("{:>10.5}", k.similarity(u)))
            .collect();
        println!("{u:>5.2} {}", row.join(" "));
    }

    let left = (-0.5f64).exp();
    let right = (-(2.0 * 1.0 - 1.0) / 2.0f64).exp();
    println!("\nsoks at u = 1: quadratic branch {left:.15}, linear branch {right:.15}");

    for kind in LossKind::ALL {
        let r = finite_diff_check(kind, 1000, 42)?;
        println!(
            "{:<8} max relative gradient error {:.2e} over {} components",
            kind.name(),
            r.max_rel_error,
            r.num_points
        );
    }
    Ok(())
}
