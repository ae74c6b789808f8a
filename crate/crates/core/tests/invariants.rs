//! Cross-module invariants: kernels, networks, compression, corrector, statistics.

use std::collections::HashMap;

use pointwalk::corrector::{solve_resolvent, TorusEnvironment};
use pointwalk::isoper::{compress, mp_step_bound, FiniteSet};
use pointwalk::kernel::{displacement_entropy_series, evolve, heat_kernel_diagonal, KernelBudget, SparseDistribution};
use pointwalk::network::{CutNetwork, Level, UnitEdge};
use pointwalk::stats::ks_normal_test;
use pointwalk::walk::{replica_rng, transition_probabilities};
use pointwalk::{Direction, Environment, EnvironmentConfig, LatticePoint, PointSet};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evolution_conserves_mass_on_occupied_sites(d in 1usize..=3, p in 0.3f64..0.9, seed in any::<u64>(), alpha in -1.0f64..1.0) {
        let env = Environment::new(EnvironmentConfig::bernoulli(d, p, seed)).unwrap();
        let mut dist = SparseDistribution::delta(LatticePoint::origin(d));
        for _ in 0..6 {
            dist = evolve(&env, &dist, alpha).unwrap();
            prop_assert!((dist.total_mass() - 1.0).abs() <= 1e-12);
            prop_assert!(dist.entries.iter().all(|(x, m)| *m >= 0.0 && env.is_occupied(x)));
        }
    }

    #[test]
    fn uniform_kernel_is_reversible(d in 1usize..=3, seed in any::<u64>()) {
        let env = Environment::new(EnvironmentConfig::bernoulli(d, 0.5, seed)).unwrap();
        let x = LatticePoint::origin(d);
        let uniform = 1.0 / (2 * d) as f64;
        for (y, pxy) in transition_probabilities(&env, &x, 0.0).unwrap() {
            let back: HashMap<LatticePoint, f64> = transition_probabilities(&env, &y, 0.0).unwrap().into_iter().collect();
            prop_assert_eq!(pxy, uniform);
            prop_assert_eq!(back[&x], uniform);
        }
    }

    #[test]
    fn compression_properties(d in 2usize..=3, seed in any::<u64>()) {
        let mut rng = replica_rng(seed, 0);
        let side = 6i64;
        let size = rng.gen_range(1..=(side.pow(d as u32) as usize));
        let points: Vec<Vec<i64>> = (0..size).map(|_| (0..d).map(|_| rng.gen_range(1..=side)).collect()).collect();
        let a = FiniteSet::new(points).unwrap();
        let c = compress(&a);
        prop_assert_eq!(c.set.len(), a.len());
        prop_assert!(c.set.energy() <= a.energy());
        prop_assert!(c.rounds as i64 <= a.energy());
        for axis in 0..d {
            prop_assert!(c.set.projection_size(axis) <= a.projection_size(axis));
        }
        prop_assert!(c.set.compress_round() == c.set);
        if d == 2 {
            let m = a.max_projection();
            prop_assert!(m * m >= a.len());
        }
    }

    #[test]
    fn resolvent_operator_is_symmetric(seed in any::<u64>(), eps in 1e-4f64..1e-1) {
        let env = Environment::new(EnvironmentConfig::bernoulli(2, 0.5, seed)).unwrap();
        let torus = TorusEnvironment::new(&env, 16).unwrap();
        let mut rng = replica_rng(seed, 1);
        let f: Vec<f64> = (0..torus.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..torus.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fg = torus.bilinear_form(eps, &f, &g);
        let gf = torus.bilinear_form(eps, &g, &f);
        prop_assert!((fg - gf).abs() <= 1e-12 * (1.0 + fg.abs()));
    }

    #[test]
    fn ks_statistic_is_scale_invariant(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let mut rng = replica_rng(seed, 2);
        let xs: Vec<f64> = (0..200).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        let a = ks_normal_test(&xs, 1.0).unwrap();
        let b = ks_normal_test(&scaled, scale).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() < 1e-12);
    }
}

#[test]
fn unit_edges_carry_the_original_length() {
    let env = Environment::new(EnvironmentConfig::bernoulli(2, 0.4, 21)).unwrap();
    let radius = 30;
    let net = CutNetwork::build(&env, radius).unwrap();
    for y in -radius..=radius {
        for x in -radius..radius {
            if !env.is_occupied(&[x, y]) {
                continue;
            }
            for (level, axis) in [(Level::Horizontal, 0), (Level::Vertical, 1)] {
                let k = env.gap(&[x, y], Direction::plus(axis)).unwrap() as i64;
                let (along, fixed) = if axis == 0 { (x, y) } else { (y, x) };
                if along + k > radius || (axis == 1 && fixed > radius) {
                    continue;
                }
                let mut mass = 0i64;
                for i in 0..k {
                    let edge = match level {
                        Level::Horizontal => UnitEdge { level, x: x + i, y },
                        Level::Vertical => UnitEdge { level, x, y: y + i },
                    };
                    let c = net.conductance(edge) as i64;
                    assert_eq!(c, k);
                    mass += c;
                }
                assert_eq!(mass, k * k);
            }
        }
    }
}

#[test]
fn entropy_is_monotone_and_diagonal_decays() {
    for (d, horizon) in [(1usize, 400usize), (2, 60), (3, 24)] {
        let env = Environment::new(EnvironmentConfig::bernoulli(d, 0.6, 4)).unwrap();
        let series = displacement_entropy_series(&env, horizon, KernelBudget::default()).unwrap();
        let q = series.q();
        assert_eq!(q[0], 0.0);
        assert!(q.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let diag = heat_kernel_diagonal(&env, horizon, KernelBudget::default()).unwrap();
        let scaled: Vec<f64> = (1..=horizon / 2)
            .map(|n| (n as f64).powf(d as f64 / 2.0) * diag[2 * n])
            .collect();
        let max = scaled.iter().cloned().fold(0.0, f64::max);
        let tail = scaled[scaled.len() / 2..].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / tail < 10.0, "d={d}: n^(d/2) p^2n ranges over {tail}..{max}");
    }
}

#[test]
fn step_bound_monotonicity() {
    let mut last = 0;
    for eps in [0.9, 0.5, 0.1, 0.05, 0.01, 0.001] {
        let n = mp_step_bound(0.25, 1.0, 2, eps).unwrap();
        assert!(n >= last);
        last = n;
    }
    let mut last = u64::MAX;
    for c0 in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let n = mp_step_bound(0.25, c0, 3, 0.01).unwrap();
        assert!(n <= last);
        last = n;
    }
}

#[test]
fn resolvent_meets_its_residual_contract() {
    let env = Environment::new(EnvironmentConfig::bernoulli(2, 0.5, 3)).unwrap();
    let torus = TorusEnvironment::new(&env, 32).unwrap();
    for eps in [1e-2, 1e-4] {
        let sol = solve_resolvent(&torus, eps, 1e-10).unwrap();
        assert!(sol.residual() <= 1e-10);
        assert!((eps * sol.energy()).is_finite());
    }
}
