//! Stationary random subsets of `Z^d` conditioned on the origin being occupied.
//!
//! Occupancy is a pure function of `(seed, point)`: Bernoulli sites hash their
//! coordinates through a counter-based mixer, so a realization never has to be
//! materialized and every thread sees the same environment. The one-dimensional
//! renewal process is laid out outward from the origin by i.i.d. gaps, with gap
//! number `j` drawn from the hash of `(seed, j)`. That samples the Palm law
//! directly: the gaps adjacent to the origin are *not* size-biased.
//!
//! Periodic patterns are exact fixtures. They are stationary only in the orbit
//! average and are not meant as ergodic instances.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Direction, LatticePoint};

pub const DEFAULT_MAX_SCAN: u64 = 1_000_000;

fn default_max_scan() -> u64 {
    DEFAULT_MAX_SCAN
}

/// Point-process family. Serialized with a `kind` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentKind {
    FullLattice,
    /// Independent sites, each occupied with probability `density`.
    Bernoulli { density: f64 },
    /// One-dimensional renewal process with gap law `P(gap = gaps[i]) = probs[i]`.
    #[serde(rename = "renewal1d")]
    Renewal1D { gaps: Vec<u64>, probs: Vec<f64> },
    /// Product pattern: `x` is occupied iff `patterns[i][x_i mod len_i] == 1` on every axis.
    Periodic { patterns: Vec<Vec<u8>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    pub dimension: usize,
    #[serde(flatten)]
    pub kind: EnvironmentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_scan")]
    pub max_scan: u64,
}

impl EnvironmentConfig {
    pub fn full_lattice(dimension: usize) -> Self {
        Self::with_kind(dimension, EnvironmentKind::FullLattice, 0)
    }

    pub fn bernoulli(dimension: usize, density: f64, seed: u64) -> Self {
        Self::with_kind(dimension, EnvironmentKind::Bernoulli { density }, seed)
    }

    pub fn renewal(gaps: Vec<u64>, probs: Vec<f64>, seed: u64) -> Self {
        Self::with_kind(1, EnvironmentKind::Renewal1D { gaps, probs }, seed)
    }

    /// The same 0/1 pattern on every axis.
    pub fn periodic(dimension: usize, pattern: &[u8]) -> Self {
        let patterns = vec![pattern.to_vec(); dimension];
        Self::with_kind(dimension, EnvironmentKind::Periodic { patterns }, 0)
    }

    fn with_kind(dimension: usize, kind: EnvironmentKind, seed: u64) -> Self {
        EnvironmentConfig {
            dimension,
            kind,
            seed,
            max_scan: DEFAULT_MAX_SCAN,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        if self.max_scan == 0 {
            return Err(Error::config("max_scan must be positive"));
        }
        match &self.kind {
            EnvironmentKind::FullLattice => {}
            EnvironmentKind::Bernoulli { density } => {
                if !(*density > 0.0 && *density <= 1.0) {
                    return Err(Error::config(format!("density {density} not in (0, 1]")));
                }
            }
            EnvironmentKind::Renewal1D { gaps, probs } => {
                if self.dimension != 1 {
                    return Err(Error::config("renewal1d requires dimension = 1"));
                }
                if gaps.is_empty() || gaps.len() != probs.len() {
                    return Err(Error::config("renewal gaps and probs must be non-empty and of equal length"));
                }
                if gaps.contains(&0) {
                    return Err(Error::config("renewal gaps must be positive"));
                }
                if probs.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::config("renewal probabilities must be non-negative"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!("renewal probabilities sum to {total}, not 1")));
                }
            }
            EnvironmentKind::Periodic { patterns } => {
                if patterns.len() != self.dimension {
                    return Err(Error::config("periodic needs one pattern per axis"));
                }
                for (axis, pat) in patterns.iter().enumerate() {
                    if pat.iter().any(|&c| c > 1) {
                        return Err(Error::config("periodic patterns hold 0/1 cells"));
                    }
                    if pat.first() != Some(&1) {
                        // the origin must be occupied without breaking periodicity
                        return Err(Error::config(format!(
                            "periodic pattern for axis {} must start with an occupied cell",
                            axis + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `E_P(f_e)` for `e = ±e_axis`, computed from the generator's law.
    pub fn mean_gap(&self, axis: usize) -> f64 {
        match &self.kind {
            EnvironmentKind::FullLattice => 1.0,
            EnvironmentKind::Bernoulli { density } => 1.0 / density,
            EnvironmentKind::Renewal1D { gaps, probs } => {
                gaps.iter().zip(probs).map(|(&g, &p)| g as f64 * p).sum()
            }
            EnvironmentKind::Periodic { patterns } => {
                let pat = &patterns[axis];
                let ones = pat.iter().filter(|&&c| c == 1).count();
                pat.len() as f64 / ones as f64
            }
        }
    }

    /// `P(f_e = k)` under the Palm law.
    pub fn gap_pmf(&self, axis: usize, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match &self.kind {
            EnvironmentKind::FullLattice => f64::from(u8::from(k == 1)),
            EnvironmentKind::Bernoulli { density } => (1.0 - density).powi(k as i32 - 1) * density,
            EnvironmentKind::Renewal1D { gaps, probs } => gaps
                .iter()
                .zip(probs)
                .filter(|(&g, _)| g == k)
                .map(|(_, &p)| p)
                .sum(),
            EnvironmentKind::Periodic { patterns } => {
                let pat = &patterns[axis];
                let len = pat.len();
                let occupied: Vec<usize> = (0..len).filter(|&i| pat[i] == 1).collect();
                let hits = occupied
                    .iter()
                    .filter(|&&i| {
                        let next = (1..=len).find(|&j| pat[(i + j) % len] == 1).unwrap_or(len);
                        next as u64 == k
                    })
                    .count();
                hits as f64 / occupied.len() as f64
            }
        }
    }

    /// Size-biased law `k P(f = k) / E(f)` of the gap covering a fixed unit edge.
    pub fn size_biased_pmf(&self, axis: usize, k: u64) -> f64 {
        k as f64 * self.gap_pmf(axis, k) / self.mean_gap(axis)
    }
}

/// Read access to a realization `P(ω) ⊂ Z^d`.
pub trait PointSet {
    fn dimension(&self) -> usize;

    fn is_occupied(&self, x: &[i64]) -> bool;

    /// Smallest `k > 0` with `x + k e` occupied, i.e. `f_e(θ_x ω)`.
    fn gap(&self, x: &[i64], direction: Direction) -> Result<u64>;

    /// The `2d` coordinate nearest neighbours, in [`Direction`] index order.
    fn neighbors(&self, x: &[i64]) -> Result<Vec<LatticePoint>> {
        let base = LatticePoint::new(x);
        Direction::all(self.dimension())
            .map(|e| Ok(base.offset(e, self.gap(x, e)?)))
            .collect()
    }

    /// Re-centering at the next occupied site in direction `e`.
    fn induced_shift(&self, x: &[i64], direction: Direction) -> Result<LatticePoint> {
        Ok(LatticePoint::new(x).offset(direction, self.gap(x, direction)?))
    }
}

impl<P: PointSet + ?Sized> PointSet for &P {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn is_occupied(&self, x: &[i64]) -> bool {
        (**self).is_occupied(x)
    }
    fn gap(&self, x: &[i64], direction: Direction) -> Result<u64> {
        (**self).gap(x, direction)
    }
}

// splitmix64 finalizer
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn site_hash(seed: u64, coords: &[i64]) -> u64 {
    let mut h = mix64(seed);
    for &c in coords {
        h = mix64(h ^ c as u64);
    }
    h
}

#[inline]
fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

const RENEWAL_STREAM: u64 = 0x5245_4E45_5741_4C31;

#[derive(Debug)]
enum Repr {
    Full,
    Bernoulli { density: f64 },
    Renewal(RenewalLine),
    Periodic { patterns: Vec<Vec<bool>> },
}

/// Lazily extended point table of a renewal line.
#[derive(Debug)]
struct RenewalLine {
    seed: u64,
    gaps: Vec<u64>,
    cdf: Vec<f64>,
    // right[k] = t_k for k >= 0, left[k] = t_{-k}
    table: RwLock<(Vec<i64>, Vec<i64>)>,
}

impl RenewalLine {
    fn new(seed: u64, gaps: &[u64], probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        RenewalLine {
            seed,
            gaps: gaps.to_vec(),
            cdf,
            table: RwLock::new((vec![0], vec![0])),
        }
    }

    /// Gap between `t_j` and `t_{j+1}`, for any `j ∈ Z`.
    fn draw(&self, j: i64) -> u64 {
        let u = unit_interval(site_hash(self.seed ^ RENEWAL_STREAM, &[j]));
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.gaps.len() - 1);
        self.gaps[idx]
    }

    fn ensure_covers(&self, x: i64) {
        {
            let t = self.table.read().expect("renewal table poisoned");
            if *t.0.last().unwrap() > x && *t.1.last().unwrap() < x {
                return;
            }
        }
        let mut t = self.table.write().expect("renewal table poisoned");
        while *t.0.last().unwrap() <= x {
            let k = t.0.len() as i64 - 1;
            let next = t.0[k as usize] + self.draw(k) as i64;
            t.0.push(next);
        }
        while *t.1.last().unwrap() >= x {
            let k = t.1.len() as i64;
            let next = t.1[k as usize - 1] - self.draw(-k) as i64;
            t.1.push(next);
        }
    }

    fn contains(&self, x: i64) -> bool {
        self.ensure_covers(x);
        let t = self.table.read().expect("renewal table poisoned");
        if x >= 0 {
            t.0.binary_search(&x).is_ok()
        } else {
            t.1.binary_search_by(|p| x.cmp(p)).is_ok()
        }
    }

    /// Nearest point strictly after (`forward`) or before `x`.
    fn next_point(&self, x: i64, forward: bool) -> i64 {
        self.ensure_covers(x);
        let t = self.table.read().expect("renewal table poisoned");
        let (right, left) = (&t.0, &t.1);
        if forward {
            if x >= 0 {
                right[right.partition_point(|&p| p <= x)]
            } else {
                // left is decreasing; last entry > x
                let i = left.partition_point(|&p| p > x);
                left[i - 1]
            }
        } else if x > 0 {
            right[right.partition_point(|&p| p < x) - 1]
        } else {
            left[left.partition_point(|&p| p >= x)]
        }
    }
}

impl Clone for RenewalLine {
    fn clone(&self) -> Self {
        let t = self.table.read().expect("renewal table poisoned");
        RenewalLine {
            seed: self.seed,
            gaps: self.gaps.clone(),
            cdf: self.cdf.clone(),
            table: RwLock::new(t.clone()),
        }
    }
}

impl Clone for Repr {
    fn clone(&self) -> Self {
        match self {
            Repr::Full => Repr::Full,
            Repr::Bernoulli { density } => Repr::Bernoulli { density: *density },
            Repr::Renewal(r) => Repr::Renewal(r.clone()),
            Repr::Periodic { patterns } => Repr::Periodic {
                patterns: patterns.clone(),
            },
        }
    }
}

/// A realization `ω` with `ω(0) = 1`.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvironmentConfig,
    repr: Repr,
}

impl Environment {
    pub fn new(config: EnvironmentConfig) -> Result<Self> {
        config.validate()?;
        let repr = match &config.kind {
            EnvironmentKind::FullLattice => Repr::Full,
            EnvironmentKind::Bernoulli { density } => Repr::Bernoulli { density: *density },
            EnvironmentKind::Renewal1D { gaps, probs } => {
                Repr::Renewal(RenewalLine::new(config.seed, gaps, probs))
            }
            EnvironmentKind::Periodic { patterns } => Repr::Periodic {
                patterns: patterns
                    .iter()
                    .map(|p| p.iter().map(|&c| c == 1).collect())
                    .collect(),
            },
        };
        Ok(Environment { config, repr })
    }

    pub fn config(&self) -> &EnvironmentConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Whether the line through `x` along `axis` contains any occupied site.
    /// Always true for the random generators; periodic lines can be empty.
    pub fn line_has_points(&self, x: &[i64], axis: usize) -> bool {
        match &self.repr {
            Repr::Periodic { patterns } => patterns.iter().enumerate().all(|(i, pat)| {
                i == axis || pat[x[i].rem_euclid(pat.len() as i64) as usize]
            }),
            _ => true,
        }
    }

    fn scan_exceeded(&self, x: &[i64], direction: Direction) -> Error {
        Error::ScanExceeded {
            from: LatticePoint::new(x),
            direction,
            max_scan: self.config.max_scan,
        }
    }
}

impl PointSet for Environment {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn is_occupied(&self, x: &[i64]) -> bool {
        debug_assert_eq!(x.len(), self.config.dimension);
        match &self.repr {
            Repr::Full => true,
            Repr::Bernoulli { density } => {
                x.iter().all(|&c| c == 0) || unit_interval(site_hash(self.config.seed, x)) < *density
            }
            Repr::Renewal(line) => line.contains(x[0]),
            Repr::Periodic { patterns } => patterns
                .iter()
                .zip(x)
                .all(|(pat, &c)| pat[c.rem_euclid(pat.len() as i64) as usize]),
        }
    }

    fn gap(&self, x: &[i64], direction: Direction) -> Result<u64> {
        let axis = direction.axis;
        match &self.repr {
            Repr::Full => Ok(1),
            Repr::Renewal(line) => {
                let y = line.next_point(x[0], direction.positive);
                let k = (y - x[0]).unsigned_abs();
                if k > self.config.max_scan {
                    return Err(self.scan_exceeded(x, direction));
                }
                Ok(k)
            }
            Repr::Periodic { patterns } => {
                if !self.line_has_points(x, axis) {
                    return Err(self.scan_exceeded(x, direction));
                }
                let pat = &patterns[axis];
                let len = pat.len() as i64;
                (1..=len as u64)
                    .find(|&k| {
                        let c = x[axis] + direction.sign() * k as i64;
                        pat[c.rem_euclid(len) as usize]
                    })
                    .filter(|&k| k <= self.config.max_scan)
                    .ok_or_else(|| self.scan_exceeded(x, direction))
            }
            Repr::Bernoulli { .. } => {
                let mut y: LatticePoint = LatticePoint::new(x);
                for k in 1..=self.config.max_scan {
                    y[axis] += direction.sign();
                    if self.is_occupied(&y) {
                        return Ok(k);
                    }
                }
                Err(self.scan_exceeded(x, direction))
            }
        }
    }
}

/// Per-thread memo of gaps in front of any [`PointSet`].
pub struct GapCache<P> {
    inner: P,
    cache: RefCell<HashMap<(LatticePoint, Direction), u64>>,
}

impl<P: PointSet> GapCache<P> {
    pub fn new(inner: P) -> Self {
        GapCache {
            inner,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn cached_len(&self) -> usize {
        self.cache.borrow().len()
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: PointSet> PointSet for GapCache<P> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn is_occupied(&self, x: &[i64]) -> bool {
        self.inner.is_occupied(x)
    }

    fn gap(&self, x: &[i64], direction: Direction) -> Result<u64> {
        let key = (LatticePoint::new(x), direction);
        if let Some(&k) = self.cache.borrow().get(&key) {
            return Ok(k);
        }
        let k = self.inner.gap(x, direction)?;
        self.cache.borrow_mut().insert(key, k);
        Ok(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c)
    }

    #[test]
    fn full_lattice_is_everywhere_occupied() {
        let env = Environment::new(EnvironmentConfig::full_lattice(2)).unwrap();
        assert!(env.is_occupied(&[5, -3]));
        for e in Direction::all(2) {
            assert_eq!(env.gap(&[5, -3], e).unwrap(), 1);
        }
        let nb = env.neighbors(&[0, 0]).unwrap();
        assert_eq!(nb, vec![p(&[1, 0]), p(&[-1, 0]), p(&[0, 1]), p(&[0, -1])]);
        assert_eq!(env.induced_shift(&[0, 0], Direction::plus(0)).unwrap(), p(&[1, 0]));
    }

    #[test]
    fn bernoulli_origin_is_conditioned_and_queries_replay() {
        for seed in 0..200 {
            let env = Environment::new(EnvironmentConfig::bernoulli(1, 0.5, seed)).unwrap();
            assert!(env.is_occupied(&[0]));
            assert_eq!(env.is_occupied(&[7]), env.is_occupied(&[7]));
            let again = Environment::new(EnvironmentConfig::bernoulli(1, 0.5, seed)).unwrap();
            assert_eq!(env.is_occupied(&[7]), again.is_occupied(&[7]));
        }
    }

    #[test]
    fn periodic_spacing_two() {
        let env = Environment::new(EnvironmentConfig::periodic(1, &[1, 0])).unwrap();
        assert_eq!(env.gap(&[0], Direction::plus(0)).unwrap(), 2);
        assert_eq!(env.neighbors(&[0]).unwrap(), vec![p(&[2]), p(&[-2])]);
        let once = env.induced_shift(&[0], Direction::plus(0)).unwrap();
        let twice = env.induced_shift(&once, Direction::plus(0)).unwrap();
        assert_eq!(twice, p(&[4]));
    }

    #[test]
    fn alternating_gaps_enumerated() {
        // points {..., -3, -2, 0, 1, 3, 4, 6, ...}
        let env = Environment::new(EnvironmentConfig::periodic(1, &[1, 1, 0])).unwrap();
        let expected_points = [-3, -2, 0, 1, 3, 4, 6];
        for x in -3..=6 {
            assert_eq!(env.is_occupied(&[x]), expected_points.contains(&x), "x = {x}");
        }
        assert_eq!(env.neighbors(&[0]).unwrap(), vec![p(&[1]), p(&[-2])]);
        let mut x = p(&[0]);
        for _ in 0..4 {
            x = env.induced_shift(&x, Direction::plus(0)).unwrap();
        }
        assert_eq!(x, p(&[6]));
    }

    #[test]
    fn empty_periodic_line_reports_scan_exceeded() {
        let env = Environment::new(EnvironmentConfig::periodic(2, &[1, 0])).unwrap();
        // row y = 1 has no occupied sites at all
        assert!(!env.line_has_points(&[0, 1], 0));
        assert!(matches!(
            env.gap(&[0, 1], Direction::plus(0)),
            Err(Error::ScanExceeded { .. })
        ));
    }

    #[test]
    fn sparse_bernoulli_hits_scan_cap() {
        let mut cfg = EnvironmentConfig::bernoulli(1, 1e-9, 3);
        cfg.max_scan = 50;
        let env = Environment::new(cfg).unwrap();
        assert!(matches!(
            env.gap(&[0], Direction::plus(0)),
            Err(Error::ScanExceeded { max_scan: 50, .. })
        ));
    }

    #[test]
    fn renewal_points_are_replayable() {
        let cfg = EnvironmentConfig::renewal(vec![1, 2], vec![0.5, 0.5], 11);
        let a = Environment::new(cfg.clone()).unwrap();
        let b = Environment::new(cfg).unwrap();
        // query in different orders
        let fwd: Vec<bool> = (-40..40).map(|x| a.is_occupied(&[x])).collect();
        let bwd: Vec<bool> = (-40..40).rev().map(|x| b.is_occupied(&[x])).collect();
        let bwd: Vec<bool> = bwd.into_iter().rev().collect();
        assert_eq!(fwd, bwd);
        assert!(a.is_occupied(&[0]));
        for x in -40..40 {
            if a.is_occupied(&[x]) {
                let g = a.gap(&[x], Direction::plus(0)).unwrap();
                assert!(g == 1 || g == 2);
                assert!(a.is_occupied(&[x + g as i64]));
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(EnvironmentConfig::bernoulli(2, 0.0, 1).validate().is_err());
        assert!(EnvironmentConfig::bernoulli(2, 1.5, 1).validate().is_err());
        assert!(EnvironmentConfig::renewal(vec![1, 2], vec![0.5, 0.4], 1).validate().is_err());
        assert!(EnvironmentConfig::periodic(1, &[0, 1]).validate().is_err());
        let mut r = EnvironmentConfig::renewal(vec![1], vec![1.0], 1);
        r.dimension = 2;
        assert!(r.validate().is_err());
    }

    #[test]
    fn analytic_gap_laws() {
        let b = EnvironmentConfig::bernoulli(1, 0.5, 0);
        assert_eq!(b.mean_gap(0), 2.0);
        assert_eq!(b.gap_pmf(0, 3), 0.125);
        assert_eq!(b.size_biased_pmf(0, 3), 3.0 * 0.125 / 2.0);
        let per = EnvironmentConfig::periodic(1, &[1, 1, 0]);
        assert_eq!(per.mean_gap(0), 1.5);
        assert_eq!(per.gap_pmf(0, 1), 0.5);
        assert_eq!(per.gap_pmf(0, 2), 0.5);
        let r = EnvironmentConfig::renewal(vec![1, 2], vec![0.5, 0.5], 0);
        assert_eq!(r.mean_gap(0), 1.5);
    }

    #[test]
    fn gap_cache_memoizes() {
        let env = Environment::new(EnvironmentConfig::bernoulli(2, 0.4, 9)).unwrap();
        let cached = GapCache::new(&env);
        let a = cached.gap(&[0, 0], Direction::plus(1)).unwrap();
        let b = cached.gap(&[0, 0], Direction::plus(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, env.gap(&[0, 0], Direction::plus(1)).unwrap());
        assert_eq!(cached.cached_len(), 1);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = EnvironmentConfig::renewal(vec![1, 2], vec![0.5, 0.5], 4);
        let text = toml::to_string(&cfg).unwrap();
        let back: EnvironmentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let parsed: EnvironmentConfig =
            toml::from_str("dimension = 2\nkind = \"bernoulli\"\ndensity = 1\nseed = 3\n").unwrap();
        assert_eq!(parsed, EnvironmentConfig::bernoulli(2, 1.0, 3));
    }
}
