//! Resolvent solves and the corrector on a periodized environment.
//!
//! The cell `[-L/2, L/2)^d` of a base environment is repeated periodically.
//! With the uniform measure on occupied cell sites the transition operator is
//! symmetric, so `(1 + ε - P) ψ = V` is solved by conjugate gradients, one
//! coordinate of the drift at a time.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::env::PointSet;
use crate::error::{Error, Result};
use crate::lattice::{Direction, LatticePoint};
use crate::walk::{replica_rng, Trajectory, WalkConfig};

pub const DEFAULT_LADDER: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-6];
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100_000;

const EMPTY: u32 = u32::MAX;

/// Occupied sites of one periodic cell with their torus neighbour table.
pub struct TorusEnvironment {
    dimension: usize,
    side: i64,
    low: i64,
    /// Cell position (row-major, axis 0 fastest) to site index, `EMPTY` if vacant.
    index: Vec<u32>,
    coords: Vec<i64>,
    /// `neighbors[i * 2d + k]` is the site reached in direction `k`.
    neighbors: Vec<u32>,
    /// Matching gaps, each at most `L`.
    gaps: Vec<u32>,
}

impl TorusEnvironment {
    pub fn new<P: PointSet + ?Sized>(env: &P, side: usize) -> Result<Self> {
        let d = env.dimension();
        if side < 1 {
            return Err(Error::domain("torus side must be positive"));
        }
        let side = side as i64;
        let low = -(side / 2);
        let cells = (side as usize)
            .checked_pow(d as u32)
            .filter(|&c| c < EMPTY as usize)
            .ok_or_else(|| Error::domain("torus too large"))?;
        let mut index = vec![EMPTY; cells];
        let mut coords = Vec::new();
        let mut x = vec![low; d];
        for (cell, slot) in index.iter_mut().enumerate() {
            let mut rest = cell as i64;
            for c in x.iter_mut() {
                *c = low + rest % side;
                rest /= side;
            }
            if env.is_occupied(&x) {
                *slot = (coords.len() / d) as u32;
                coords.extend_from_slice(&x);
            }
        }
        let mut torus = TorusEnvironment {
            dimension: d,
            side,
            low,
            index,
            coords,
            neighbors: Vec::new(),
            gaps: Vec::new(),
        };
        let n = torus.len();
        let mut neighbors = Vec::with_capacity(n * 2 * d);
        let mut gaps = Vec::with_capacity(n * 2 * d);
        let mut y = vec![0i64; d];
        for i in 0..n {
            for k in 0..2 * d {
                let e = Direction::from_index(k);
                y.copy_from_slice(torus.site(i));
                let mut found = None;
                for g in 1..=side {
                    y[e.axis] += e.sign();
                    if let Some(j) = torus.index_of(&y) {
                        found = Some((j, g));
                        break;
                    }
                }
                // the site itself is met after L steps at the latest
                let (j, g) = found.expect("torus line contains its start");
                neighbors.push(j as u32);
                gaps.push(g as u32);
            }
        }
        torus.neighbors = neighbors;
        torus.gaps = gaps;
        if torus.index_of(&vec![0; d]).is_none() {
            return Err(Error::domain("origin must be occupied"));
        }
        Ok(torus)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn side(&self) -> i64 {
        self.side
    }

    /// Number of occupied sites in the cell.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn site(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dimension..(i + 1) * self.dimension]
    }

    /// `((x + L/2) mod L) - L/2` coordinatewise.
    pub fn wrap(&self, x: &[i64]) -> LatticePoint {
        x.iter()
            .map(|&c| (c - self.low).rem_euclid(self.side) + self.low)
            .collect::<Vec<_>>()
            .into()
    }

    /// Site index of the cell representative of `x`, if occupied.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        let mut cell = 0i64;
        for &c in x.iter().rev() {
            cell = cell * self.side + (c - self.low).rem_euclid(self.side);
        }
        match self.index[cell as usize] {
            EMPTY => None,
            i => Some(i as usize),
        }
    }

    pub fn origin_index(&self) -> usize {
        self.index_of(&vec![0; self.dimension]).expect("origin occupied")
    }

    /// `(neighbour index, gap)` in direction index `k`.
    #[inline]
    pub fn neighbor(&self, i: usize, k: usize) -> (usize, u64) {
        let at = i * 2 * self.dimension + k;
        (self.neighbors[at] as usize, self.gaps[at] as u64)
    }

    /// `V(x) = (1/2d) sum_{y in N_x} (y - x)`.
    pub fn local_drift(&self, i: usize) -> Vec<f64> {
        let d = self.dimension;
        let mut v = vec![0.0; d];
        for k in 0..2 * d {
            let e = Direction::from_index(k);
            v[e.axis] += (e.sign() * self.neighbor(i, k).1 as i64) as f64;
        }
        v.iter_mut().for_each(|c| *c /= (2 * d) as f64);
        v
    }

    /// Component `axis` of the drift at every site.
    pub fn drift_component(&self, axis: usize) -> Vec<f64> {
        let two_d = (2 * self.dimension) as f64;
        (0..self.len())
            .map(|i| {
                let plus = self.neighbor(i, Direction::plus(axis).index()).1 as f64;
                let minus = self.neighbor(i, Direction::minus(axis).index()).1 as f64;
                (plus - minus) / two_d
            })
            .collect()
    }

    /// `out = (1 + ε) f - P f`.
    pub fn apply_operator(&self, epsilon: f64, f: &[f64], out: &mut [f64]) {
        let two_d = 2 * self.dimension;
        let inv = 1.0 / two_d as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let nb = &self.neighbors[i * two_d..(i + 1) * two_d];
            let mean: f64 = nb.iter().map(|&j| f[j as usize]).sum::<f64>() * inv;
            *o = (1.0 + epsilon) * f[i] - mean;
        }
    }

    /// `<f, (1 + ε - P) g>` under the counting measure on sites.
    pub fn bilinear_form(&self, epsilon: f64, f: &[f64], g: &[f64]) -> f64 {
        let mut ag = vec![0.0; g.len()];
        self.apply_operator(epsilon, g, &mut ag);
        dot(f, &ag)
    }
}

impl PointSet for TorusEnvironment {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn is_occupied(&self, x: &[i64]) -> bool {
        self.index_of(x).is_some()
    }

    fn gap(&self, x: &[i64], direction: Direction) -> Result<u64> {
        match self.index_of(x) {
            Some(i) => Ok(self.neighbor(i, direction.index()).1),
            None => Err(Error::domain(format!("{} is not an occupied torus site", LatticePoint::new(x)))),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of one scalar conjugate-gradient solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveLog {
    pub epsilon: f64,
    pub axis: usize,
    pub iterations: usize,
    /// Relative residual `|b - A x| / |b|` (0 for `b = 0`).
    pub residual: f64,
}

fn conjugate_gradient(
    torus: &TorusEnvironment,
    epsilon: f64,
    b: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 1..=max_iterations {
        torus.apply_operator(epsilon, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= tol * b_norm {
            // confirm against the true residual, not the recursive one
            torus.apply_operator(epsilon, &x, &mut ap);
            let true_res = b.iter().zip(&ap).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt() / b_norm;
            if true_res <= tol {
                return Ok((x, it, true_res));
            }
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            p.copy_from_slice(&r);
            rr = dot(&r, &r);
            continue;
        }
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual: rr.sqrt() / b_norm,
    })
}

/// `ψ_ε` with `(1 + ε - P) ψ_ε = V`, stored site-major as `d`-vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolventSolution {
    pub epsilon: f64,
    pub dimension: usize,
    pub psi: Vec<f64>,
    pub logs: Vec<SolveLog>,
}

impl ResolventSolution {
    pub fn psi_at(&self, i: usize) -> &[f64] {
        &self.psi[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Largest relative residual over the components.
    pub fn residual(&self) -> f64 {
        self.logs.iter().map(|l| l.residual).fold(0.0, f64::max)
    }

    /// `max_x |ψ_ε(x)|` in the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.psi
            .chunks(self.dimension)
            .map(|v| dot(v, v).sqrt())
            .fold(0.0, f64::max)
    }

    /// `ε |ψ_ε|^2` with `|.|` the root-mean-square over sites.
    pub fn energy(&self) -> f64 {
        let sites = (self.psi.len() / self.dimension) as f64;
        self.epsilon * dot(&self.psi, &self.psi) / sites
    }
}

pub fn solve_resolvent(torus: &TorusEnvironment, epsilon: f64, tol: f64) -> Result<ResolventSolution> {
    solve_resolvent_with_cap(torus, epsilon, tol, MAX_ITERATIONS)
}

pub fn solve_resolvent_with_cap(
    torus: &TorusEnvironment,
    epsilon: f64,
    tol: f64,
    max_iterations: usize,
) -> Result<ResolventSolution> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let d = torus.dimension();
    let components: Vec<(Vec<f64>, SolveLog)> = (0..d)
        .into_par_iter()
        .map(|axis| {
            let v = torus.drift_component(axis);
            let (psi, iterations, residual) = conjugate_gradient(torus, epsilon, &v, tol, max_iterations)?;
            Ok((
                psi,
                SolveLog {
                    epsilon,
                    axis,
                    iterations,
                    residual,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let n = torus.len();
    let mut psi = vec![0.0; n * d];
    let mut logs = Vec::with_capacity(d);
    for (axis, (values, log)) in components.into_iter().enumerate() {
        for (i, v) in values.into_iter().enumerate() {
            psi[i * d + axis] = v;
        }
        logs.push(log);
    }
    Ok(ResolventSolution {
        epsilon,
        dimension: d,
        psi,
        logs,
    })
}

/// `χ(x) = ψ_ε(x) - ψ_ε(0)` per occupied cell site.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorField {
    pub dimension: usize,
    pub chi: Vec<f64>,
    pub epsilon: f64,
    /// `(ε_1, ε_2)` when the field is a linear extrapolation to `ε = 0`.
    pub extrapolated_from: Option<(f64, f64)>,
}

impl CorrectorField {
    pub fn at(&self, i: usize) -> &[f64] {
        &self.chi[i * self.dimension..(i + 1) * self.dimension]
    }

    /// `χ(y) - χ(x)` along direction index `k` from site `i`.
    pub fn edge_gradient(&self, torus: &TorusEnvironment, i: usize, k: usize) -> Vec<f64> {
        let (j, _) = torus.neighbor(i, k);
        self.at(j).iter().zip(self.at(i)).map(|(a, b)| a - b).collect()
    }

    pub fn write_csv<W: Write>(&self, torus: &TorusEnvironment, mut out: W) -> Result<()> {
        let d = self.dimension;
        let header: Vec<String> = (1..=d)
            .map(|i| format!("x_{i}"))
            .chain((1..=d).map(|i| format!("chi_{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..torus.len() {
            let row: Vec<String> = torus
                .site(i)
                .iter()
                .map(|c| c.to_string())
                .chain(self.at(i).iter().map(|c| format!("{c:e}")))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn corrector_field(solution: &ResolventSolution, torus: &TorusEnvironment) -> CorrectorField {
    let d = solution.dimension;
    let origin = solution.psi_at(torus.origin_index()).to_vec();
    let chi = solution
        .psi
        .chunks(d)
        .flat_map(|v| v.iter().zip(&origin).map(|(a, b)| a - b).collect::<Vec<_>>())
        .collect();
    CorrectorField {
        dimension: d,
        chi,
        epsilon: solution.epsilon,
        extrapolated_from: None,
    }
}

/// Linear extrapolation in `ε` of two fields to `ε = 0`.
pub fn richardson(a: &CorrectorField, b: &CorrectorField) -> CorrectorField {
    let (e1, e2) = (a.epsilon, b.epsilon);
    let chi = a
        .chi
        .iter()
        .zip(&b.chi)
        .map(|(c1, c2)| (e2 * c1 - e1 * c2) / (e2 - e1))
        .collect();
    CorrectorField {
        dimension: a.dimension,
        chi,
        epsilon: 0.0,
        extrapolated_from: Some((e1.min(e2), e1.max(e2))),
    }
}

/// Solves along an ε-ladder and extrapolates from its two smallest values.
pub struct CorrectorLadder {
    pub solutions: Vec<ResolventSolution>,
    pub fields: Vec<CorrectorField>,
    pub extrapolated: CorrectorField,
}

impl CorrectorLadder {
    pub fn solve(torus: &TorusEnvironment, ladder: &[f64], tol: f64) -> Result<Self> {
        if ladder.len() < 2 {
            return Err(Error::domain("an ε-ladder needs at least two values"));
        }
        let solutions: Vec<ResolventSolution> = ladder
            .iter()
            .map(|&e| solve_resolvent(torus, e, tol))
            .collect::<Result<_>>()?;
        let fields: Vec<CorrectorField> = solutions.iter().map(|s| corrector_field(s, torus)).collect();
        let mut order: Vec<usize> = (0..ladder.len()).collect();
        order.sort_by(|&i, &j| ladder[i].total_cmp(&ladder[j]));
        let extrapolated = richardson(&fields[order[0]], &fields[order[1]]);
        Ok(CorrectorLadder {
            solutions,
            fields,
            extrapolated,
        })
    }

    pub fn write_solve_log<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epsilon,iterations,residual")?;
        for s in &self.solutions {
            let iterations: usize = s.logs.iter().map(|l| l.iterations).max().unwrap_or(0);
            writeln!(out, "{:e},{},{:e}", s.epsilon, iterations, s.residual())?;
        }
        Ok(())
    }
}

/// `max_x |(1/2d) sum_{y in N_x} [y + χ(y)] - [x + χ(x)]|`.
pub fn harmonicity_residual(field: &CorrectorField, torus: &TorusEnvironment) -> f64 {
    let d = torus.dimension();
    let two_d = 2 * d;
    let mut worst: f64 = 0.0;
    let mut acc = vec![0.0; d];
    for i in 0..torus.len() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for k in 0..two_d {
            let e = Direction::from_index(k);
            let (j, g) = torus.neighbor(i, k);
            acc[e.axis] += (e.sign() * g as i64) as f64;
            for (a, (cj, ci)) in acc.iter_mut().zip(field.at(j).iter().zip(field.at(i))) {
                *a += cj - ci;
            }
        }
        let norm = acc.iter().map(|a| (a / two_d as f64).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(norm);
    }
    worst
}

/// Sum of `χ` increments along a path of neighbour steps from `start`, and
/// whether the path returned to `start`.
pub fn loop_sum(
    field: &CorrectorField,
    torus: &TorusEnvironment,
    start: usize,
    steps: &[Direction],
) -> (Vec<f64>, bool) {
    let mut sum = vec![0.0; field.dimension];
    let mut at = start;
    for e in steps {
        for (s, g) in sum.iter_mut().zip(field.edge_gradient(torus, at, e.index())) {
            *s += g;
        }
        at = torus.neighbor(at, e.index()).0;
    }
    (sum, at == start)
}

/// Site average of `χ(σ_e x) - χ(x)` for each direction `e`.
pub fn shift_means(field: &CorrectorField, torus: &TorusEnvironment) -> Vec<Vec<f64>> {
    let n = torus.len() as f64;
    (0..2 * torus.dimension())
        .map(|k| {
            let mut mean = vec![0.0; field.dimension];
            for i in 0..torus.len() {
                for (m, g) in mean.iter_mut().zip(field.edge_gradient(torus, i, k)) {
                    *m += g;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            mean
        })
        .collect()
}

/// Largest `|χ(y) - χ(x)|` over edges.
pub fn max_edge_gradient(field: &CorrectorField, torus: &TorusEnvironment) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..torus.len() {
        for k in 0..2 * torus.dimension() {
            let g = field.edge_gradient(torus, i, k);
            worst = worst.max(dot(&g, &g).sqrt());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SublinearityReport {
    /// Per direction index: `max |χ(t_k)| / k` over the outer half of the
    /// occupied points met before half the torus side.
    pub axis_max: Vec<f64>,
    /// Box radius `n = L/4` used for the density.
    pub radius: i64,
    /// Fraction of occupied sites with `|x|_∞ <= n` and `|χ(x)| >= frac n`.
    pub density: f64,
}

/// `|χ(t_k)| / k` for the `k`-th occupied point along direction `k_dir` from the origin.
pub fn axis_profile(field: &CorrectorField, torus: &TorusEnvironment, direction: Direction) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut at = torus.origin_index();
    let mut travelled = 0u64;
    let half = (torus.side() / 2) as u64;
    for k in 1.. {
        let (j, g) = torus.neighbor(at, direction.index());
        travelled += g;
        if travelled >= half.max(1) {
            break;
        }
        at = j;
        let chi = field.at(at);
        out.push((k, dot(chi, chi).sqrt() / k as f64));
    }
    out
}

pub fn sublinearity_scan(field: &CorrectorField, torus: &TorusEnvironment, epsilon_frac: f64) -> SublinearityReport {
    let axis_max = Direction::all(torus.dimension())
        .map(|e| {
            let profile = axis_profile(field, torus, e);
            let skip = profile.len() / 2;
            profile[skip..].iter().map(|&(_, v)| v).fold(0.0, f64::max)
        })
        .collect();
    let radius = torus.side() / 4;
    let threshold = epsilon_frac * radius as f64;
    let (mut inside, mut large) = (0usize, 0usize);
    for i in 0..torus.len() {
        if torus.site(i).iter().all(|c| c.abs() <= radius) {
            inside += 1;
            let chi = field.at(i);
            if dot(chi, chi).sqrt() >= threshold {
                large += 1;
            }
        }
    }
    SublinearityReport {
        axis_max,
        radius,
        density: if inside == 0 { 0.0 } else { large as f64 / inside as f64 },
    }
}

/// `M_k = X_k + χ(X_k)` along a trajectory of the periodized walk.
pub fn martingale_decompose(
    field: &CorrectorField,
    torus: &TorusEnvironment,
    trajectory: &Trajectory,
) -> Result<Vec<Vec<f64>>> {
    let d = torus.dimension();
    let mut x = vec![0i64; d];
    let mut at = torus.origin_index();
    let mut out = Vec::with_capacity(trajectory.steps() + 1);
    out.push(field.at(at).to_vec());
    for (step, mv) in trajectory.moves().iter().enumerate() {
        let (j, g) = torus.neighbor(at, mv.direction.index());
        if g != mv.gap {
            return Err(Error::LeftWindow { step: step + 1 });
        }
        x[mv.direction.axis] += mv.direction.sign() * g as i64;
        at = j;
        out.push(x.iter().zip(field.at(at)).map(|(&c, chi)| c as f64 + chi).collect());
    }
    Ok(out)
}

/// `M_n` for `m` independent torus walks from the origin.
pub fn martingale_endpoints(field: &CorrectorField, torus: &TorusEnvironment, cfg: &WalkConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if cfg.alpha != 0.0 {
        return Err(Error::domain("the corrector is built for the uniform walk"));
    }
    let d = torus.dimension();
    let two_d = 2 * d;
    Ok((0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.rng_seed, r);
            let mut x = vec![0i64; d];
            let mut at = torus.origin_index();
            for _ in 0..cfg.steps {
                let k = rng.gen_range(0..two_d);
                let (j, g) = torus.neighbor(at, k);
                let e = Direction::from_index(k);
                x[e.axis] += e.sign() * g as i64;
                at = j;
            }
            x.iter().zip(field.at(at)).map(|(&c, chi)| c as f64 + chi).collect()
        })
        .collect())
}

/// Increment `Δ = (y - x) + χ(y) - χ(x)` of the martingale along direction index `k`.
fn increment(field: &CorrectorField, torus: &TorusEnvironment, i: usize, k: usize, out: &mut [f64]) {
    let e = Direction::from_index(k);
    let (j, g) = torus.neighbor(i, k);
    for (a, o) in out.iter_mut().enumerate() {
        *o = field.at(j)[a] - field.at(i)[a];
    }
    out[e.axis] += (e.sign() * g as i64) as f64;
}

/// Site average of the one-step covariance `(1/2d) sum_k Δ Δ^T`.
pub fn one_step_covariance(field: &CorrectorField, torus: &TorusEnvironment) -> Vec<Vec<f64>> {
    let d = torus.dimension();
    let mut cov = vec![vec![0.0; d]; d];
    let mut delta = vec![0.0; d];
    for i in 0..torus.len() {
        for k in 0..2 * d {
            increment(field, torus, i, k, &mut delta);
            for a in 0..d {
                for b in 0..d {
                    cov[a][b] += delta[a] * delta[b];
                }
            }
        }
    }
    let scale = (2 * d * torus.len()) as f64;
    cov.iter_mut().flatten().for_each(|c| *c /= scale);
    cov
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LindebergRow {
    pub threshold: f64,
    /// Site average of `(1/2d) sum_k |Δ|^2 1{|Δ| > K}`.
    pub truncated: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LindebergReport {
    pub full: f64,
    pub rows: Vec<LindebergRow>,
    /// Truncated mass is nonincreasing along the ladder.
    pub decaying: bool,
}

pub fn lindeberg_check(field: &CorrectorField, torus: &TorusEnvironment, ladder: &[f64]) -> LindebergReport {
    let d = torus.dimension();
    let mut norms = Vec::with_capacity(torus.len() * 2 * d);
    let mut delta = vec![0.0; d];
    for i in 0..torus.len() {
        for k in 0..2 * d {
            increment(field, torus, i, k, &mut delta);
            norms.push(dot(&delta, &delta));
        }
    }
    let scale = norms.len() as f64;
    let full = norms.iter().sum::<f64>() / scale;
    let rows: Vec<LindebergRow> = ladder
        .iter()
        .map(|&k| {
            let truncated = norms.iter().filter(|&&n2| n2.sqrt() > k).fold(0.0, |a, b| a + b) / scale;
            LindebergRow {
                threshold: k,
                truncated,
                ratio: if full > 0.0 { truncated / full } else { 0.0 },
            }
        })
        .collect();
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    let decaying = sorted.windows(2).all(|w| w[1].truncated <= w[0].truncated);
    LindebergReport { full, rows, decaying }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Environment, EnvironmentConfig};

    fn torus(cfg: EnvironmentConfig, side: usize) -> TorusEnvironment {
        TorusEnvironment::new(&Environment::new(cfg).unwrap(), side).unwrap()
    }

    fn alternating() -> TorusEnvironment {
        // cell {-1, 0, 1} of the points 0, 1, 3, 4, ...
        torus(EnvironmentConfig::periodic(1, &[1, 1, 0]), 3)
    }

    #[test]
    fn wrap_is_centered() {
        let t = torus(EnvironmentConfig::full_lattice(2), 4);
        assert_eq!(t.wrap(&[2, -3]), LatticePoint::from([-2, 1]));
        assert_eq!(t.wrap(&[1, -2]), LatticePoint::from([1, -2]));
        assert_eq!(t.len(), 16);
    }

    #[test]
    fn alternating_cell_drift() {
        let t = alternating();
        assert_eq!(t.len(), 2);
        let zero = t.origin_index();
        let one = t.index_of(&[1]).unwrap();
        assert_eq!(t.local_drift(zero), vec![-0.5]);
        assert_eq!(t.local_drift(one), vec![0.5]);
        assert_eq!(t.neighbor(zero, 1), (one, 2));
    }

    #[test]
    fn drift_sums_to_zero() {
        let t = torus(EnvironmentConfig::bernoulli(2, 0.5, 3), 16);
        for axis in 0..2 {
            let s: f64 = t.drift_component(axis).iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn full_lattice_corrector_vanishes() {
        let t = torus(EnvironmentConfig::full_lattice(2), 8);
        let sol = solve_resolvent(&t, 1e-3, DEFAULT_TOLERANCE).unwrap();
        assert!(sol.psi.iter().all(|&v| v == 0.0));
        let field = corrector_field(&sol, &t);
        assert_eq!(harmonicity_residual(&field, &t), 0.0);
        let report = sublinearity_scan(&field, &t, 0.05);
        assert!(report.axis_max.iter().all(|&v| v == 0.0));
        assert_eq!(report.density, 0.0);
    }

    #[test]
    fn alternating_cell_closed_form() {
        let t = alternating();
        let one = t.index_of(&[1]).unwrap();
        for eps in [1e-2, 1e-4, 1e-6] {
            let sol = solve_resolvent(&t, eps, DEFAULT_TOLERANCE).unwrap();
            assert!(sol.residual() < 1e-10);
            let field = corrector_field(&sol, &t);
            assert!((field.at(one)[0] - 1.0 / (2.0 + eps)).abs() < 1e-12);
            assert!(harmonicity_residual(&field, &t) <= eps * (1.0 + sol.sup_norm()));
        }
        let ladder = CorrectorLadder::solve(&t, &DEFAULT_LADDER, DEFAULT_TOLERANCE).unwrap();
        assert!((ladder.extrapolated.at(one)[0] - 0.5).abs() < 1e-8);
        assert_eq!(ladder.extrapolated.extrapolated_from, Some((1e-6, 1e-4)));
    }

    #[test]
    fn operator_is_symmetric() {
        use rand::SeedableRng;
        let t = torus(EnvironmentConfig::bernoulli(2, 0.5, 11), 24);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f: Vec<f64> = (0..t.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let g: Vec<f64> = (0..t.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let (a, b) = (t.bilinear_form(1e-3, &f, &g), t.bilinear_form(1e-3, &g, &f));
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn cocycle_and_loops() {
        let t = torus(EnvironmentConfig::bernoulli(2, 0.5, 5), 16);
        let sol = solve_resolvent(&t, 1e-3, DEFAULT_TOLERANCE).unwrap();
        let field = corrector_field(&sol, &t);
        assert!(field.at(t.origin_index()).iter().all(|&c| c == 0.0));
        for i in 0..t.len() {
            for k in 0..4 {
                let (j, _) = t.neighbor(i, k);
                let back = Direction::from_index(k).reversed().index();
                assert_eq!(t.neighbor(j, back).0, i);
                let fwd = field.edge_gradient(&t, i, k);
                let rev = field.edge_gradient(&t, j, back);
                assert!(fwd.iter().zip(&rev).all(|(a, b)| a == &-b));
            }
        }
        // winding once around the torus along each axis
        for axis in 0..2 {
            let e = Direction::plus(axis);
            let mut steps = Vec::new();
            let mut at = t.origin_index();
            loop {
                steps.push(e);
                at = t.neighbor(at, e.index()).0;
                if at == t.origin_index() {
                    break;
                }
            }
            let (sum, closed) = loop_sum(&field, &t, t.origin_index(), &steps);
            assert!(closed);
            assert!(sum.iter().all(|s| s.abs() < 1e-10));
        }
        for mean in shift_means(&field, &t) {
            assert!(mean.iter().all(|m| m.abs() < 1e-10));
        }
    }

    #[test]
    fn martingale_starts_at_zero_and_tracks_walk() {
        let t = torus(EnvironmentConfig::full_lattice(2), 8);
        let sol = solve_resolvent(&t, 1e-2, DEFAULT_TOLERANCE).unwrap();
        let field = corrector_field(&sol, &t);
        let traj = crate::walk::run_quenched(&t, 0, &WalkConfig::new(20, 1, 3)).unwrap().remove(0);
        let m = martingale_decompose(&field, &t, &traj).unwrap();
        assert_eq!(m[0], vec![0.0, 0.0]);
        for (mk, xk) in m.iter().zip(traj.positions()) {
            assert_eq!(mk, &xk.as_f64());
        }
    }

    #[test]
    fn foreign_trajectory_leaves_window() {
        let t = torus(EnvironmentConfig::full_lattice(1), 8);
        let sol = solve_resolvent(&t, 1e-2, DEFAULT_TOLERANCE).unwrap();
        let field = corrector_field(&sol, &t);
        let traj = Trajectory::from_moves(
            1,
            0,
            vec![crate::walk::Move {
                direction: Direction::plus(0),
                gap: 2,
            }],
        );
        assert!(matches!(
            martingale_decompose(&field, &t, &traj),
            Err(Error::LeftWindow { step: 1 })
        ));
    }

    #[test]
    fn full_lattice_covariance_and_lindeberg() {
        let t = torus(EnvironmentConfig::full_lattice(2), 8);
        let sol = solve_resolvent(&t, 1e-2, DEFAULT_TOLERANCE).unwrap();
        let field = corrector_field(&sol, &t);
        let cov = one_step_covariance(&field, &t);
        assert_eq!(cov, vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        let report = lindeberg_check(&field, &t, &[0.0, 1.5, 3.0]);
        assert_eq!(report.rows[0].truncated, report.full);
        assert_eq!(report.rows[1].truncated, 0.0);
        assert!(report.decaying);
    }

    #[test]
    fn solver_reports_non_convergence() {
        let t = torus(EnvironmentConfig::bernoulli(2, 0.5, 2), 32);
        assert!(matches!(
            solve_resolvent_with_cap(&t, 1e-6, 1e-14, 3),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn csv_outputs() {
        let t = alternating();
        let ladder = CorrectorLadder::solve(&t, &[1e-2, 1e-3], DEFAULT_TOLERANCE).unwrap();
        let mut buf = Vec::new();
        ladder.extrapolated.write_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x_1,chi_1\n0,0e0\n"));
        let mut buf = Vec::new();
        ladder.write_solve_log(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("epsilon,iterations,residual\n1e-2,"));
    }
}
