//! Annealed estimate of the velocity `X_n / n` for several generators.

use pointwalk::stats::velocity_estimate;
use pointwalk::walk::{annealed_endpoints, WalkConfig};
use pointwalk::EnvironmentConfig;

fn main() -> pointwalk::Result<()> {
    let walk = WalkConfig::new(2_000, 2_000, 5);
    let generators = [
        ("full lattice d=2", EnvironmentConfig::full_lattice(2)),
        ("Bernoulli(0.5) d=1", EnvironmentConfig::bernoulli(1, 0.5, 1)),
        ("Bernoulli(0.5) d=3", EnvironmentConfig::bernoulli(3, 0.5, 1)),
        ("renewal {1,2}", EnvironmentConfig::renewal(vec![1, 2], vec![0.5, 0.5], 1)),
    ];
    for (name, cfg) in generators {
        let v = velocity_estimate(&annealed_endpoints(&walk, &cfg)?, walk.steps)?;
        let bands: Vec<String> = (0..v.dimension())
            .map(|i| format!("{:+.5} (4σ/√m = {:.5})", v.mean[i], 4.0 * v.standard_error(i)))
            .collect();
        println!("{name:22} {}", bands.join("  "));
    }
    Ok(())
}
