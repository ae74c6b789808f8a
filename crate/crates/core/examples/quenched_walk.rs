//! Run a few walks in one fixed environment and dump a trajectory as CSV.

use pointwalk::walk::{run_quenched, transition_probabilities, WalkConfig};
use pointwalk::{Environment, EnvironmentConfig};

fn main() -> pointwalk::Result<()> {
    let cfg = EnvironmentConfig::bernoulli(2, 0.5, 11);
    let env = Environment::new(cfg.clone())?;
    let walks = run_quenched(&env, cfg.seed, &WalkConfig::new(25, 3, 1))?;
    for (r, t) in walks.iter().enumerate() {
        println!("replica {r}: X_25 = {}, consistent = {}", t.endpoint(), t.is_consistent_with(&env)?);
    }

    println!("alpha = 1 transition law at the origin:");
    for (y, p) in transition_probabilities(&env, &[0, 0], 1.0)? {
        println!("  {y}  {p:.4}");
    }

    let mut csv = Vec::new();
    walks[0].write_csv(&mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv).lines().take(6).collect::<Vec<_>>().join("\n"));
    println!("\n...");
    Ok(())
}
