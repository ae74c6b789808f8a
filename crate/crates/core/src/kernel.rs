//! Exact evolution of the quenched law `p^n(0, .)` and the displacement and
//! entropy series built from it.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::env::PointSet;
use crate::error::{Error, Result};
use crate::lattice::{Direction, LatticePoint};
use crate::walk::transition_probabilities;

/// Allowed drift of the total mass away from 1.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Default horizon for the exact series by dimension.
pub fn default_horizon(dimension: usize) -> usize {
    match dimension {
        1 => 2000,
        2 => 150,
        _ => 60,
    }
}

/// Kahan–Neumaier compensated sum.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Finitely supported law over occupied sites after `step` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDistribution {
    pub step: usize,
    pub entries: HashMap<LatticePoint, f64>,
}

impl SparseDistribution {
    pub fn delta(x: LatticePoint) -> Self {
        SparseDistribution {
            step: 0,
            entries: HashMap::from([(x, 1.0)]),
        }
    }

    pub fn get(&self, x: &LatticePoint) -> f64 {
        self.entries.get(x).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.entries.values().copied())
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }
}

/// One application of the transition operator.
pub fn evolve<P: PointSet + ?Sized>(
    env: &P,
    dist: &SparseDistribution,
    alpha: f64,
) -> Result<SparseDistribution> {
    let mut next: HashMap<LatticePoint, f64> = HashMap::with_capacity(dist.entries.len() * 2);
    for (x, &mass) in &dist.entries {
        for (y, p) in transition_probabilities(env, x, alpha)? {
            *next.entry(y).or_insert(0.0) += mass * p;
        }
    }
    let out = SparseDistribution {
        step: dist.step + 1,
        entries: next,
    };
    let total = out.total_mass();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::MassLeak {
            step: out.step,
            total,
        });
    }
    Ok(out)
}

/// Upper bound on the number of indexed sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelBudget {
    pub max_sites: usize,
}

impl Default for KernelBudget {
    fn default() -> Self {
        KernelBudget {
            max_sites: 8_000_000,
        }
    }
}

/// Occupied sites within graph distance `horizon` of the origin, in BFS order.
///
/// Sites at depth `<= horizon` carry their `2d` gaps and neighbour indices;
/// neighbours at depth `horizon + 1` are recorded as `NONE`.
pub struct ReachableGraph {
    dimension: usize,
    horizon: usize,
    coords: Vec<i64>,
    gaps: Vec<u64>,
    neighbors: Vec<u32>,
    /// `depth_end[k]` is the number of sites at depth `<= k`.
    depth_end: Vec<usize>,
}

const NONE: u32 = u32::MAX;

impl ReachableGraph {
    pub fn build<P: PointSet + ?Sized>(env: &P, horizon: usize, budget: KernelBudget) -> Result<Self> {
        let d = env.dimension();
        let two_d = 2 * d;
        let mut index: HashMap<LatticePoint, u32> = HashMap::new();
        let mut coords = Vec::new();
        let mut gaps = Vec::new();
        let mut neighbors = Vec::new();
        let mut depth_end = Vec::with_capacity(horizon + 1);

        let origin = LatticePoint::origin(d);
        coords.extend_from_slice(&origin);
        index.insert(origin, 0);
        let mut frontier = 0..1usize;
        for depth in 0..=horizon {
            let mut count = coords.len() / d;
            for i in frontier.clone() {
                let x = LatticePoint::new(&coords[i * d..(i + 1) * d]);
                for k in 0..two_d {
                    let e = Direction::from_index(k);
                    let g = env.gap(&x, e)?;
                    gaps.push(g);
                    if depth == horizon {
                        neighbors.push(NONE);
                        continue;
                    }
                    let y = x.offset(e, g);
                    let j = match index.get(&y) {
                        Some(&j) => j,
                        None => {
                            if count >= budget.max_sites {
                                return Err(Error::MemoryBudgetExceeded {
                                    sites: count + 1,
                                    budget: budget.max_sites,
                                });
                            }
                            coords.extend_from_slice(&y);
                            index.insert(y, count as u32);
                            count += 1;
                            (count - 1) as u32
                        }
                    };
                    neighbors.push(j);
                }
            }
            depth_end.push(frontier.end);
            frontier = frontier.end..count;
        }
        // sites discovered at depth horizon + 1 are not kept
        let kept = *depth_end.last().unwrap();
        coords.truncate(kept * d);
        Ok(ReachableGraph {
            dimension: d,
            horizon,
            coords,
            gaps,
            neighbors,
            depth_end,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn site(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Sites at depth `<= k`.
    pub fn within_depth(&self, k: usize) -> usize {
        self.depth_end[k.min(self.horizon)]
    }

    fn transition_weights(&self, i: usize, alpha: f64, out: &mut [f64]) {
        let two_d = 2 * self.dimension;
        let g = &self.gaps[i * two_d..(i + 1) * two_d];
        if alpha == 0.0 {
            out.iter_mut().for_each(|w| *w = 1.0 / two_d as f64);
        } else {
            let mut z = 0.0;
            for (w, &gap) in out.iter_mut().zip(g) {
                *w = (gap as f64).powf(alpha);
                z += *w;
            }
            out.iter_mut().for_each(|w| *w /= z);
        }
    }

    /// Advances `p` (the law at step `n`) into `next` (step `n + 1`).
    fn evolve_into(&self, p: &[f64], next: &mut [f64], n: usize, alpha: f64) -> Result<()> {
        let two_d = 2 * self.dimension;
        let mut w = vec![0.0; two_d];
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.within_depth(n) {
            let mass = p[i];
            if mass == 0.0 {
                continue;
            }
            self.transition_weights(i, alpha, &mut w);
            for k in 0..two_d {
                let j = self.neighbors[i * two_d + k];
                debug_assert_ne!(j, NONE);
                next[j as usize] += mass * w[k];
            }
        }
        let total = neumaier_sum(next.iter().copied());
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::MassLeak {
                step: n + 1,
                total,
            });
        }
        Ok(())
    }

    /// Calls `visit(n, p^n)` for `n = 0..=horizon`.
    pub fn for_each_law<F>(&self, alpha: f64, mut visit: F) -> Result<()>
    where
        F: FnMut(usize, &[f64]),
    {
        let mut p = vec![0.0; self.len()];
        let mut next = vec![0.0; self.len()];
        p[0] = 1.0;
        visit(0, &p);
        for n in 0..self.horizon {
            self.evolve_into(&p, &mut next, n, alpha)?;
            std::mem::swap(&mut p, &mut next);
            visit(n + 1, &p);
        }
        Ok(())
    }

    /// `sum_k gap_k(x)^2` at site `i`.
    fn squared_gap_sum(&self, i: usize) -> f64 {
        let two_d = 2 * self.dimension;
        self.gaps[i * two_d..(i + 1) * two_d]
            .iter()
            .map(|&g| (g * g) as f64)
            .sum()
    }
}

/// `p^n(0,0)` for `n = 0..=horizon`.
pub fn heat_kernel_diagonal<P: PointSet + ?Sized>(
    env: &P,
    horizon: usize,
    budget: KernelBudget,
) -> Result<Vec<f64>> {
    let graph = ReachableGraph::build(env, horizon, budget)?;
    let mut diag = Vec::with_capacity(horizon + 1);
    graph.for_each_law(0.0, |_, p| diag.push(p[0]))?;
    Ok(diag)
}

/// Partial sums `G(n) = sum_{m <= n} p^m(0,0)`.
pub fn green_partial_sums(diagonal: &[f64]) -> Vec<f64> {
    diagonal
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    pub n: usize,
    pub p_n_00: f64,
    pub m: f64,
    pub q: f64,
    pub s: f64,
    pub support: usize,
}

/// `M(n)`, `Q(n)` and `S(n)` computed from `g_n = (p^n + p^{n-1}) / 2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DisplacementEntropySeries {
    pub dimension: usize,
    pub rows: Vec<SeriesRow>,
}

impl DisplacementEntropySeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn m(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.m).collect()
    }

    pub fn q(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.q).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,p_n_00,M,Q,S")?;
        for r in &self.rows {
            writeln!(out, "{},{:e},{:e},{:e},{:e}", r.n, r.p_n_00, r.m, r.q, r.s)?;
        }
        Ok(())
    }
}

/// Exact series for `n = 0..=horizon` under the uniform walk.
///
/// `M(0) = Q(0) = 0` by convention; `S(0)` is evaluated on `g_0 = δ_0`.
/// `S(n)` uses neighbour symmetry: `sum_x sum_{y in N_x} (g(x) + g(y)) |x-y|^2
/// = 2 sum_x g(x) sum_{y in N_x} |x-y|^2`.
pub fn displacement_entropy_series<P: PointSet + ?Sized>(
    env: &P,
    horizon: usize,
    budget: KernelBudget,
) -> Result<DisplacementEntropySeries> {
    let graph = ReachableGraph::build(env, horizon, budget)?;
    let len = graph.len();
    let norms: Vec<f64> = (0..len)
        .map(|i| graph.site(i).iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt())
        .collect();
    let edge_mass: Vec<f64> = (0..len).map(|i| 2.0 * graph.squared_gap_sum(i)).collect();

    let mut prev = vec![0.0; len];
    let mut rows = Vec::with_capacity(horizon + 1);
    graph.for_each_law(0.0, |n, p| {
        let active = graph.within_depth(n);
        let (mut m, mut q, mut s, mut support) = (0.0, 0.0, 0.0, 0usize);
        for i in 0..active {
            let g = if n == 0 { p[i] } else { 0.5 * (p[i] + prev[i]) };
            if g > 0.0 {
                support += 1;
                m += norms[i] * g;
                q -= g * g.ln();
                s += edge_mass[i] * g;
            }
        }
        if n == 0 {
            m = 0.0;
            q = 0.0;
        }
        rows.push(SeriesRow {
            n,
            p_n_00: p[0],
            m,
            q,
            s,
            support,
        });
        prev[..active].copy_from_slice(&p[..active]);
    })?;
    Ok(DisplacementEntropySeries {
        dimension: graph.dimension(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// The measured quantity the threshold applies to.
    pub value: f64,
    pub threshold: f64,
    pub failing_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub checks: Vec<CheckOutcome>,
}

impl InequalityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn into_result(self) -> Result<Self> {
        match self.checks.iter().find(|c| !c.passed) {
            Some(c) => Err(Error::ReportFailure {
                check: c.name.clone(),
                index: c.failing_index.unwrap_or(0),
            }),
            None => Ok(self),
        }
    }
}

/// Lower bound for `M(n) / e^{Q(n)/d}`.
pub const DISPLACEMENT_RATIO_FLOOR: f64 = 0.05;

/// Runs the five checks on a series of length at least 50:
///
/// * `entropy_monotone`: `Q(n+1) >= Q(n) - 1e-12`
/// * `entropy_slope`: slope of `Q` against `log n` over the second half `>= d/2 - 0.1`
/// * `displacement_entropy_ratio`: `min_{n>=1} M(n) / e^{Q(n)/d} >= 0.05`
/// * `increment_bound`: `(ΔM)^2 <= S(n)/(4d) ΔQ + 1e-10` for `n >= 1`
/// * `diffusive_ratio`: `max/min` of `M(n)/sqrt(n)` over `[N/4, N]` at most 3
pub fn check_inequalities(series: &DisplacementEntropySeries) -> Result<InequalityReport> {
    let rows = &series.rows;
    if rows.len() < 50 {
        return Err(Error::domain(format!(
            "inequality checks need at least 50 terms, got {}",
            rows.len()
        )));
    }
    let d = series.dimension as f64;
    let last = rows.len() - 1;
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    let mut fail = None;
    for n in 0..last {
        let drop = rows[n].q - rows[n + 1].q;
        worst = worst.max(drop);
        if drop > 1e-12 && fail.is_none() {
            fail = Some(n + 1);
        }
    }
    checks.push(CheckOutcome {
        name: "entropy_monotone".into(),
        passed: fail.is_none(),
        value: worst,
        threshold: 1e-12,
        failing_index: fail,
    });

    let half = (last / 2).max(1);
    let (x, y): (Vec<f64>, Vec<f64>) = rows[half..=last]
        .iter()
        .map(|r| ((r.n as f64).ln(), r.q))
        .unzip();
    let slope = crate::stats::linear_fit(&x, &y).0;
    let target = d / 2.0 - 0.1;
    checks.push(CheckOutcome {
        name: "entropy_slope".into(),
        passed: slope >= target,
        value: slope,
        threshold: target,
        failing_index: (slope < target).then_some(half),
    });

    let (mut min_ratio, mut at) = (f64::INFINITY, 1);
    for r in &rows[1..] {
        let ratio = r.m / (r.q / d).exp();
        if ratio < min_ratio {
            min_ratio = ratio;
            at = r.n;
        }
    }
    checks.push(CheckOutcome {
        name: "displacement_entropy_ratio".into(),
        passed: min_ratio >= DISPLACEMENT_RATIO_FLOOR,
        value: min_ratio,
        threshold: DISPLACEMENT_RATIO_FLOOR,
        failing_index: (min_ratio < DISPLACEMENT_RATIO_FLOOR).then_some(at),
    });

    let mut worst = f64::NEG_INFINITY;
    let mut fail = None;
    for n in 1..last {
        let dm = rows[n + 1].m - rows[n].m;
        let dq = rows[n + 1].q - rows[n].q;
        let excess = dm * dm - (rows[n].s / (4.0 * d) * dq + 1e-10);
        worst = worst.max(excess);
        if excess > 0.0 && fail.is_none() {
            fail = Some(n);
        }
    }
    checks.push(CheckOutcome {
        name: "increment_bound".into(),
        passed: fail.is_none(),
        value: worst,
        threshold: 0.0,
        failing_index: fail,
    });

    let start = (last / 4).max(1);
    let ratios: Vec<f64> = rows[start..=last]
        .iter()
        .map(|r| r.m / (r.n as f64).sqrt())
        .collect();
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    checks.push(CheckOutcome {
        name: "diffusive_ratio".into(),
        passed: spread <= 3.0,
        value: spread,
        threshold: 3.0,
        failing_index: (spread > 3.0).then_some(start),
    });

    Ok(InequalityReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Environment, EnvironmentConfig};

    fn env(cfg: EnvironmentConfig) -> Environment {
        Environment::new(cfg).unwrap()
    }

    fn binomial_return(n: u64) -> f64 {
        // C(2n, n) / 4^n
        (1..=n).fold(1.0, |acc, k| acc * (n + k) as f64 / (4.0 * k as f64))
    }

    #[test]
    fn sparse_evolve_full_lattice() {
        let e = env(EnvironmentConfig::full_lattice(1));
        let d1 = evolve(&e, &SparseDistribution::delta(LatticePoint::origin(1)), 0.0).unwrap();
        assert_eq!(d1.get(&LatticePoint::from([1])), 0.5);
        assert_eq!(d1.get(&LatticePoint::from([-1])), 0.5);
        let d2 = evolve(&e, &d1, 0.0).unwrap();
        assert_eq!(d2.get(&LatticePoint::origin(1)), 0.5);
        assert_eq!(d2.step, 2);
    }

    #[test]
    fn spacing_two_two_step_law() {
        let e = env(EnvironmentConfig::periodic(1, &[1, 0]));
        let mut dist = SparseDistribution::delta(LatticePoint::origin(1));
        for _ in 0..2 {
            dist = evolve(&e, &dist, 0.0).unwrap();
        }
        assert_eq!(dist.get(&LatticePoint::origin(1)), 0.5);
        assert_eq!(dist.get(&LatticePoint::from([4])), 0.25);
        assert_eq!(dist.get(&LatticePoint::from([-4])), 0.25);
        assert_eq!(dist.support_len(), 3);
    }

    #[test]
    fn diagonal_matches_binomial() {
        let e = env(EnvironmentConfig::full_lattice(1));
        let diag = heat_kernel_diagonal(&e, 20, KernelBudget::default()).unwrap();
        assert_eq!(diag[1], 0.0);
        assert!((diag[10] - 63.0 / 256.0).abs() < 1e-15);
        for n in 0..=10 {
            assert!((diag[2 * n] - binomial_return(n as u64)).abs() < 1e-14);
        }
    }

    #[test]
    fn graph_agrees_with_sparse_evolution() {
        let e = env(EnvironmentConfig::bernoulli(2, 0.5, 9));
        let horizon = 12;
        let graph = ReachableGraph::build(&e, horizon, KernelBudget::default()).unwrap();
        let mut laws = Vec::new();
        graph.for_each_law(0.0, |_, p| laws.push(p.to_vec())).unwrap();
        let mut dist = SparseDistribution::delta(LatticePoint::origin(2));
        for n in 1..=horizon {
            dist = evolve(&e, &dist, 0.0).unwrap();
            for i in 0..graph.len() {
                let x = LatticePoint::new(graph.site(i));
                assert!((laws[n][i] - dist.get(&x)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn weighted_graph_agrees_with_sparse_evolution() {
        let e = env(EnvironmentConfig::bernoulli(1, 0.4, 2));
        let graph = ReachableGraph::build(&e, 8, KernelBudget::default()).unwrap();
        let mut last = Vec::new();
        graph.for_each_law(1.5, |_, p| last = p.to_vec()).unwrap();
        let mut dist = SparseDistribution::delta(LatticePoint::origin(1));
        for _ in 0..8 {
            dist = evolve(&e, &dist, 1.5).unwrap();
        }
        for i in 0..graph.len() {
            assert!((last[i] - dist.get(&LatticePoint::new(graph.site(i)))).abs() < 1e-14);
        }
    }

    #[test]
    fn series_first_terms_by_hand() {
        let e = env(EnvironmentConfig::full_lattice(1));
        let s = displacement_entropy_series(&e, 4, KernelBudget::default()).unwrap();
        assert_eq!((s.rows[0].m, s.rows[0].q), (0.0, 0.0));
        assert!((s.rows[1].m - 0.5).abs() < 1e-15);
        assert!((s.rows[1].q - 1.5 * 2f64.ln()).abs() < 1e-15);
        // g_2 = (p^2 + p^1) / 2 = {±2: 1/8, ±1: 1/4, 0: 1/4}
        let g2: [f64; 5] = [0.125, 0.25, 0.25, 0.25, 0.125];
        let q2: f64 = -g2.iter().map(|g| g * g.ln()).sum::<f64>();
        assert!((s.rows[2].m - 1.0).abs() < 1e-15);
        assert!((s.rows[2].q - q2).abs() < 1e-14);
        for r in &s.rows {
            assert!((r.s - 4.0).abs() < 1e-12, "S({}) = {}", r.n, r.s);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let e = env(EnvironmentConfig::full_lattice(2));
        let err = heat_kernel_diagonal(&e, 30, KernelBudget { max_sites: 100 }).unwrap_err();
        assert!(matches!(err, Error::MemoryBudgetExceeded { budget: 100, .. }));
    }

    #[test]
    fn full_lattice_d1_passes_all_checks() {
        let e = env(EnvironmentConfig::full_lattice(1));
        let s = displacement_entropy_series(&e, 200, KernelBudget::default()).unwrap();
        let report = check_inequalities(&s).unwrap();
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn fabricated_series_fails_increment_bound_at_one() {
        let rows = (0..60)
            .map(|n| SeriesRow {
                n,
                p_n_00: 0.0,
                m: n as f64,
                q: 1.0,
                s: 4.0,
                support: 1,
            })
            .collect();
        let series = DisplacementEntropySeries { dimension: 1, rows };
        let report = check_inequalities(&series).unwrap();
        let d = report.get("increment_bound").unwrap();
        assert!(!d.passed);
        assert_eq!(d.failing_index, Some(1));
        match report.into_result() {
            Err(Error::ReportFailure { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_series_rejected() {
        let e = env(EnvironmentConfig::full_lattice(1));
        let s = displacement_entropy_series(&e, 10, KernelBudget::default()).unwrap();
        assert!(check_inequalities(&s).is_err());
    }

    #[test]
    fn csv_header() {
        let e = env(EnvironmentConfig::full_lattice(1));
        let s = displacement_entropy_series(&e, 2, KernelBudget::default()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,p_n_00,M,Q,S\n0,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn green_sums_accumulate() {
        assert_eq!(green_partial_sums(&[1.0, 0.0, 0.5]), vec![1.0, 1.0, 1.5]);
    }
}
