//! Planar cut network, cutset conductances and the Nash-Williams sum.

use pointwalk::network::{cutset_conductances, nash_williams_sum, CutNetwork, Level};
use pointwalk::{Environment, EnvironmentConfig};

fn main() -> pointwalk::Result<()> {
    let cfg = EnvironmentConfig::bernoulli(2, 0.5, 4);
    let net = CutNetwork::build(&Environment::new(cfg.clone())?, 201)?;
    let report = cutset_conductances(&net, 200)?;
    for n in [1, 10, 50, 100, 200] {
        let row = &report.rows[n - 1];
        println!("n = {n:3}  C = {:6}  partial sum = {:.4}", row.conductance, row.partial_sum);
    }
    println!("slope against ln n: {:.4}", report.log_slope());
    println!("sum to 200: {:.4}", nash_williams_sum(&report, 200));

    let values: Vec<u32> = net.conductances(Level::Horizontal).collect();
    for k in 1..=5u32 {
        let freq = values.iter().filter(|&&c| c == k).count() as f64 / values.len() as f64;
        println!("P(c = {k}) = {freq:.4}   size-biased law {:.4}", cfg.size_biased_pmf(0, k as u64));
    }
    Ok(())
}
