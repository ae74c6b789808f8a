//! `M_n = X_n + χ(X_n)` in d = 2 against the one-step covariance.

use pointwalk::corrector::{martingale_endpoints, one_step_covariance, CorrectorLadder, TorusEnvironment, DEFAULT_LADDER, DEFAULT_TOLERANCE};
use pointwalk::stats::{covariance_isotropy_test, SampleSummary};
use pointwalk::walk::WalkConfig;
use pointwalk::{Environment, EnvironmentConfig};

fn main() -> pointwalk::Result<()> {
    let env = Environment::new(EnvironmentConfig::bernoulli(2, 0.5, 1))?;
    let torus = TorusEnvironment::new(&env, 128)?;
    let field = CorrectorLadder::solve(&torus, &DEFAULT_LADDER, DEFAULT_TOLERANCE)?.extrapolated;
    let walk = WalkConfig::new(500, 4_000, 9);
    let scale = (walk.steps as f64).sqrt();
    let samples: Vec<Vec<f64>> = martingale_endpoints(&field, &torus, &walk)?
        .into_iter()
        .map(|v| v.into_iter().map(|c| c / scale).collect())
        .collect();
    let summary = SampleSummary::from_vectors(&samples)?;
    println!("one-step covariance D̂: {:.4?}", one_step_covariance(&field, &torus));
    println!("Cov(M_n / √n):        {:.4?}", summary.covariance);
    println!("correlation: {:.4}", summary.correlation(0, 1));
    let iso = covariance_isotropy_test(&samples)?;
    println!("isotropy test: max |z| = {:.3}, p = {:.3}", iso.statistic, iso.p_value);
    Ok(())
}
