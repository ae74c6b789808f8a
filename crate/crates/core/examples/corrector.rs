//! Corrector on a periodized Bernoulli environment.

use pointwalk::corrector::{
    harmonicity_residual, lindeberg_check, max_edge_gradient, sublinearity_scan, CorrectorLadder,
    TorusEnvironment, DEFAULT_LADDER, DEFAULT_TOLERANCE,
};
use pointwalk::{Environment, EnvironmentConfig};

fn main() -> pointwalk::Result<()> {
    for side in [32, 64] {
        let env = Environment::new(EnvironmentConfig::bernoulli(2, 0.5, 1))?;
        let torus = TorusEnvironment::new(&env, side)?;
        let ladder = CorrectorLadder::solve(&torus, &DEFAULT_LADDER, DEFAULT_TOLERANCE)?;
        println!("L = {side}: {} occupied sites", torus.len());
        for (s, f) in ladder.solutions.iter().zip(&ladder.fields) {
            println!(
                "  ε = {:e}  CG iterations {:?}  harmonicity residual {:.2e}",
                s.epsilon,
                s.logs.iter().map(|l| l.iterations).collect::<Vec<_>>(),
                harmonicity_residual(f, &torus)
            );
        }
        let field = &ladder.extrapolated;
        let sub = sublinearity_scan(field, &torus, 0.05);
        println!("  density |χ| >= 0.05 L/4: {:.3}", sub.density);
        println!("  max edge gradient: {:.3}", max_edge_gradient(field, &torus));
        let lb = lindeberg_check(field, &torus, &[0.0, 5.0, 10.0]);
        println!("  truncated mass at K = 5: {:.4}", lb.rows[1].ratio);
    }
    Ok(())
}
