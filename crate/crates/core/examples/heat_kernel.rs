//! Exact return probabilities and Green partial sums in d = 3.

use pointwalk::kernel::{green_partial_sums, heat_kernel_diagonal, KernelBudget};
use pointwalk::stats::loglog_slope;
use pointwalk::{Environment, EnvironmentConfig};

fn main() -> pointwalk::Result<()> {
    let env = Environment::new(EnvironmentConfig::bernoulli(3, 0.7, 1))?;
    let horizon = 40;
    let diag = heat_kernel_diagonal(&env, horizon, KernelBudget::default())?;
    let green = green_partial_sums(&diag);
    for n in (0..=horizon).step_by(8) {
        println!("n = {n:2}  p^n(0,0) = {:.3e}  G(n) = {:.5}", diag[n], green[n]);
    }
    let (x, y): (Vec<f64>, Vec<f64>) = (16..=horizon).step_by(2).map(|m| (m as f64, diag[m])).unzip();
    println!("log-log slope over even n in [16, {horizon}]: {:.3}", loglog_slope(&x, &y));
    Ok(())
}
