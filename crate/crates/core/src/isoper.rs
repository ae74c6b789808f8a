//! Fiber compression, projection bounds, box isoperimetric profiles and the
//! Morris–Peres step bound.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;

use serde::Serialize;

use crate::env::PointSet;
use crate::error::{Error, Result};
use crate::lattice::LatticePoint;

/// Nonempty finite subset of `Z^d`, translated so every coordinate's minimum is 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteSet {
    dimension: usize,
    points: BTreeSet<LatticePoint>,
}

impl FiniteSet {
    pub fn new<I>(points: I) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: Into<LatticePoint>,
    {
        let points: Vec<LatticePoint> = points.into_iter().map(Into::into).collect();
        let dimension = points
            .first()
            .ok_or_else(|| Error::domain("finite set must be nonempty"))?
            .dimension();
        if dimension == 0 || points.iter().any(|p| p.dimension() != dimension) {
            return Err(Error::domain("points must share a positive dimension"));
        }
        let mins: Vec<i64> = (0..dimension)
            .map(|i| points.iter().map(|p| p[i]).min().unwrap())
            .collect();
        let points = points
            .into_iter()
            .map(|mut p| {
                for i in 0..dimension {
                    p[i] += 1 - mins[i];
                }
                p
            })
            .collect();
        Ok(FiniteSet { dimension, points })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &LatticePoint> {
        self.points.iter()
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        self.points.contains(&LatticePoint::new(p))
    }

    /// `E(A) = sum_{x in A} (x_1 + ... + x_d)`.
    pub fn energy(&self) -> i64 {
        self.points.iter().map(|p| p.iter().sum::<i64>()).sum()
    }

    /// `|Π^j(A)|`: size of the projection that forgets coordinate `j`.
    pub fn projection_size(&self, axis: usize) -> usize {
        self.points
            .iter()
            .map(|p| fiber_key(p, axis))
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn max_projection(&self) -> usize {
        (0..self.dimension)
            .map(|j| self.projection_size(j))
            .max()
            .unwrap()
    }

    /// Replaces every fiber along `axis` by `{1, ..., m}` with `m` its size.
    pub fn compress_axis(&self, axis: usize) -> FiniteSet {
        let mut fibers: BTreeMap<LatticePoint, i64> = BTreeMap::new();
        for p in &self.points {
            *fibers.entry(fiber_key(p, axis)).or_insert(0) += 1;
        }
        let mut points = BTreeSet::new();
        for (key, m) in fibers {
            for t in 1..=m {
                let mut coords: Vec<i64> = key.to_vec();
                coords.insert(axis, t);
                points.insert(LatticePoint::from(coords));
            }
        }
        // the other coordinates are untouched, so their minima stay at 1
        FiniteSet {
            dimension: self.dimension,
            points,
        }
    }

    /// One round `A -> A^1 -> ... -> A^d`.
    pub fn compress_round(&self) -> FiniteSet {
        (0..self.dimension).fold(self.clone(), |a, j| a.compress_axis(j))
    }
}

fn fiber_key(p: &LatticePoint, axis: usize) -> LatticePoint {
    p.iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &c)| c)
        .collect::<Vec<_>>()
        .into()
}

/// Compressed set together with the number of rounds that changed it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Compression {
    pub set: FiniteSet,
    pub rounds: usize,
}

/// Iterates full compression rounds until nothing moves.
///
/// Energy is a positive integer that strictly drops whenever a round changes
/// the set, so at most `energy(A)` rounds run.
pub fn compress(a: &FiniteSet) -> Compression {
    let mut current = a.clone();
    let mut rounds = 0;
    loop {
        let next = current.compress_round();
        if next == current {
            return Compression {
                set: current,
                rounds,
            };
        }
        current = next;
        rounds += 1;
    }
}

/// Constant in `max_j |Π^j(A)| >= c |A|^{(d-1)/d}` that holds for every set.
///
/// Loomis–Whitney gives `|A|^{d-1} <= prod_j |Π^j(A)| <= (max_j |Π^j(A)|)^d`,
/// so the constant is 1 in every dimension and is attained by cubes.
pub const PROJECTION_CONSTANT: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub size: usize,
    pub max_projection: usize,
    /// `max_j |Π^j(A)| / |A|^{(d-1)/d}`
    pub ratio: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub fn projection_bound_check(a: &FiniteSet) -> ProjectionReport {
    let d = a.dimension() as f64;
    let size = a.len();
    let max_projection = a.max_projection();
    let ratio = max_projection as f64 / (size as f64).powf((d - 1.0) / d);
    // exact integer form of ratio >= 1: max^d >= |A|^{d-1}
    let passed = (max_projection as f64).powi(a.dimension() as i32)
        >= (size as f64).powi(a.dimension() as i32 - 1);
    ProjectionReport {
        size,
        max_projection,
        ratio,
        threshold: PROJECTION_CONSTANT,
        passed,
    }
}

/// `Φ_S = |∂S| / |S|` with `|∂S| = sum_{s in S, a not in S} p(s, a)` under the uniform walk.
pub fn set_conductance<P: PointSet + ?Sized>(env: &P, set: &HashSet<LatticePoint>) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::domain("conductance of an empty set"));
    }
    let two_d = (2 * env.dimension()) as f64;
    let mut exits = 0usize;
    for s in set {
        for y in env.neighbors(s)? {
            if !set.contains(&y) {
                exits += 1;
            }
        }
    }
    Ok(exits as f64 / two_d / set.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfilePoint {
    /// Box side the candidate came from.
    pub side: usize,
    pub u: usize,
    pub phi: f64,
}

impl ProfilePoint {
    /// `u^{1/d} Φ_S`
    pub fn scaled(&self, dimension: usize) -> f64 {
        (self.u as f64).powf(1.0 / dimension as f64) * self.phi
    }
}

/// For each side `m`, the least `Φ_S` over `S` = occupied sites of an `m^d`
/// cube inside `[-R, R]^d`. Cubes are placed on a grid of stride `m`.
pub fn profile_upper_envelope<P: PointSet + ?Sized>(
    env: &P,
    radius: i64,
    sides: &[usize],
) -> Result<Vec<ProfilePoint>> {
    let d = env.dimension();
    if d < 2 {
        return Err(Error::domain("isoperimetric profile needs d >= 2"));
    }
    let mut out = Vec::with_capacity(sides.len());
    for &m in sides {
        let side = m as i64;
        if side < 1 || side > 2 * radius + 1 {
            return Err(Error::WindowTooSmall {
                radius,
                requested: side,
            });
        }
        let corners: Vec<i64> = (-radius..=radius - side + 1).step_by(m).collect();
        let mut best: Option<ProfilePoint> = None;
        let mut corner = vec![0usize; d];
        loop {
            let lo: Vec<i64> = corner.iter().map(|&c| corners[c]).collect();
            let set = occupied_in_box(env, &lo, side);
            if !set.is_empty() {
                let phi = set_conductance(env, &set)?;
                if best.as_ref().is_none_or(|b| phi < b.phi) {
                    best = Some(ProfilePoint {
                        side: m,
                        u: set.len(),
                        phi,
                    });
                }
            }
            if !advance(&mut corner, corners.len()) {
                break;
            }
        }
        if let Some(b) = best {
            out.push(b);
        }
    }
    Ok(out)
}

fn occupied_in_box<P: PointSet + ?Sized>(env: &P, lo: &[i64], side: i64) -> HashSet<LatticePoint> {
    let d = lo.len();
    let mut set = HashSet::new();
    let mut offset = vec![0usize; d];
    loop {
        let x: Vec<i64> = lo.iter().zip(&offset).map(|(&l, &o)| l + o as i64).collect();
        if env.is_occupied(&x) {
            set.insert(LatticePoint::from(x));
        }
        if !advance(&mut offset, side as usize) {
            return set;
        }
    }
}

/// Odometer increment over `[0, base)^len`; false after the last tuple.
fn advance(counter: &mut [usize], base: usize) -> bool {
    for c in counter.iter_mut() {
        *c += 1;
        if *c < base {
            return true;
        }
        *c = 0;
    }
    false
}

pub fn write_profile_csv<W: Write>(points: &[ProfilePoint], dimension: usize, mut out: W) -> Result<()> {
    writeln!(out, "u,phi,u^{{1/d}}*phi")?;
    for p in points {
        writeln!(out, "{},{:e},{:e}", p.u, p.phi, p.scaled(dimension))?;
    }
    Ok(())
}

/// `∫_4^{4/ε} 4 du / (u Φ(u)^2)` with `Φ(u) = c0 u^{-1/d}`.
pub fn mp_integral(dimension: usize, c0: f64, epsilon: f64) -> f64 {
    let d = dimension as f64;
    (2.0 * d / (c0 * c0)) * 4f64.powf(2.0 / d) * (epsilon.powf(-2.0 / d) - 1.0)
}

/// Smallest `n >= 1 + ((1-γ)^2/γ^2) ∫_4^{4/ε} 4 du / (u Φ(u)^2)`.
pub fn mp_step_bound(gamma: f64, c0: f64, dimension: usize, epsilon: f64) -> Result<u64> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::domain(format!("gamma must lie in (0, 1/2], got {gamma}")));
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::domain(format!("c0 must be positive, got {c0}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if dimension == 0 {
        return Err(Error::domain("dimension must be positive"));
    }
    let lead = (1.0 - gamma).powi(2) / gamma.powi(2);
    let n = 1.0 + lead * mp_integral(dimension, c0, epsilon);
    // guard against the ceiling landing one above an exact integer
    let rounded = n.round();
    Ok(if (n - rounded).abs() < 1e-9 * n { rounded } else { n.ceil() } as u64)
}

/// `(K̃_1, K̃_2)` with `n(ε) = ⌈K̃_1 + K̃_2 ε^{-2/d}⌉` when `γ = 1/(2d)`.
pub fn mp_constants(dimension: usize, c0: f64) -> (f64, f64) {
    let d = dimension as f64;
    let k2 = 2.0 * d * (2.0 * d - 1.0).powi(2) * 4f64.powf(2.0 / d) / (c0 * c0);
    (1.0 - k2, k2)
}
