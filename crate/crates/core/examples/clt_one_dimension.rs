//! One-dimensional CLT: `X_n / √n` against `N(0, (E f)^2)`.

use pointwalk::stats::{ks_normal_test, sample_variance};
use pointwalk::walk::{annealed_endpoints, WalkConfig};
use pointwalk::EnvironmentConfig;

fn main() -> pointwalk::Result<()> {
    let walk = WalkConfig::new(4_000, 4_000, 2);
    for cfg in [
        EnvironmentConfig::full_lattice(1),
        EnvironmentConfig::bernoulli(1, 0.5, 3),
        EnvironmentConfig::renewal(vec![1, 2], vec![0.5, 0.5], 3),
    ] {
        let sigma = cfg.mean_gap(0);
        let scaled: Vec<f64> = annealed_endpoints(&walk, &cfg)?
            .iter()
            .map(|p| p[0] as f64 / (walk.steps as f64).sqrt())
            .collect();
        let ks = ks_normal_test(&scaled, sigma)?;
        println!(
            "{:?}: variance / σ² = {:.3}, KS D = {:.4}, p = {:.3}",
            cfg.kind,
            sample_variance(&scaled) / (sigma * sigma),
            ks.statistic,
            ks.p_value
        );
    }
    Ok(())
}
