//! Fiber compression, the projection bound, box profiles and the step bound.

use pointwalk::isoper::{compress, mp_step_bound, profile_upper_envelope, projection_bound_check, FiniteSet};
use pointwalk::{Environment, EnvironmentConfig};

fn main() -> pointwalk::Result<()> {
    let a = FiniteSet::new([[1, 2], [1, 3], [2, 1], [4, 4], [3, 2]])?;
    let c = compress(&a);
    println!("energy {} -> {} in {} rounds", a.energy(), c.set.energy(), c.rounds);
    println!("compressed: {:?}", c.set.points().map(|p| p.to_string()).collect::<Vec<_>>());
    println!("projection ratio {:.3}", projection_bound_check(&a).ratio);

    let env = Environment::new(EnvironmentConfig::bernoulli(2, 0.7, 1))?;
    for p in profile_upper_envelope(&env, 40, &[4, 8, 16, 32])? {
        println!("side {:2}  u = {:4}  Φ = {:.4}  √u Φ = {:.3}", p.side, p.u, p.phi, p.scaled(2));
    }
    for eps in [0.5, 0.1, 0.01] {
        println!("steps for ε = {eps}: {}", mp_step_bound(0.25, 1.0, 2, eps)?);
    }
    Ok(())
}
