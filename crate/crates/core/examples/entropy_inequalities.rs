//! Displacement and entropy series with the inequality checks.

use pointwalk::kernel::{check_inequalities, displacement_entropy_series, KernelBudget};
use pointwalk::{Environment, EnvironmentConfig};

fn main() -> pointwalk::Result<()> {
    let env = Environment::new(EnvironmentConfig::bernoulli(2, 0.5, 2))?;
    let series = displacement_entropy_series(&env, 80, KernelBudget::default())?;
    for r in series.rows.iter().step_by(16) {
        println!("n = {:3}  M = {:.4}  Q = {:.4}  S = {:.3}", r.n, r.m, r.q, r.s);
    }
    let report = check_inequalities(&series)?;
    for c in &report.checks {
        println!("{:28} {} (value {:.4}, threshold {})", c.name, if c.passed { "ok" } else { "FAILED" }, c.value, c.threshold);
    }
    Ok(())
}
