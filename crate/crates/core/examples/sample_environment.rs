//! Query a few environments: occupancy, gaps, neighbours and induced shifts.

use pointwalk::{Direction, Environment, EnvironmentConfig, PointSet};

fn main() -> pointwalk::Result<()> {
    let bernoulli = Environment::new(EnvironmentConfig::bernoulli(2, 0.5, 7))?;
    println!("Bernoulli(0.5), seed 7, around the origin:");
    for y in (-4..=4).rev() {
        let row: String = (-8..=8)
            .map(|x| if bernoulli.is_occupied(&[x, y]) { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }
    println!("neighbours of the origin: {:?}", bernoulli.neighbors(&[0, 0])?);

    let renewal = Environment::new(EnvironmentConfig::renewal(vec![1, 2], vec![0.5, 0.5], 3))?;
    let mut x = 0i64;
    let mut points = vec![x];
    for _ in 0..8 {
        x = renewal.induced_shift(&[x], Direction::plus(0))?[0];
        points.push(x);
    }
    println!("renewal gaps {{1, 2}}: first points to the right {points:?}");

    let alternating = Environment::new(EnvironmentConfig::periodic(1, &[1, 1, 0]))?;
    println!(
        "pattern 110: neighbours of 0 are {:?}",
        alternating.neighbors(&[0])?
    );
    Ok(())
}
