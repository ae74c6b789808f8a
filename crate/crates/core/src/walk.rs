//! Quenched and annealed simulation of the coordinate-nearest-neighbour walk.
//!
//! Replica `r` draws from a ChaCha8 stream seeded with `rng_seed ^ r`; in annealed
//! runs its environment seed is `env.seed ^ r`. Replicas are independent, so the
//! parallel driver returns exactly what a sequential replay would.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, EnvironmentConfig, PointSet};
use crate::error::{Error, Result};
use crate::lattice::{Direction, LatticePoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub steps: usize,
    pub replicas: usize,
    /// Transition weight exponent; `0` is the uniform walk.
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl WalkConfig {
    pub fn new(steps: usize, replicas: usize, rng_seed: u64) -> Self {
        WalkConfig {
            steps,
            replicas,
            alpha: 0.0,
            rng_seed,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::config("replicas must be at least 1"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::config("alpha must be finite"));
        }
        Ok(())
    }
}

pub fn replica_rng(rng_seed: u64, replica: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(rng_seed ^ replica)
}

pub fn replica_env_seed(env_seed: u64, replica: u64) -> u64 {
    env_seed ^ replica
}

/// One move of a trajectory: the direction taken and the gap crossed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Move {
    pub direction: Direction,
    pub gap: u64,
}

/// A path `X_0 = 0, X_1, ..., X_n` stored as moves.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub env_seed: u64,
    dimension: usize,
    moves: Vec<Move>,
}

impl Trajectory {
    pub fn new(dimension: usize, env_seed: u64) -> Self {
        Trajectory {
            env_seed,
            dimension,
            moves: Vec::new(),
        }
    }

    pub fn from_moves(dimension: usize, env_seed: u64, moves: Vec<Move>) -> Self {
        Trajectory {
            env_seed,
            dimension,
            moves,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn steps(&self) -> usize {
        self.moves.len()
    }

    pub fn moves(&self) -> &[Move] {
        &self.moves
    }

    pub fn push(&mut self, mv: Move) {
        self.moves.push(mv);
    }

    /// `X_0, ..., X_n`.
    pub fn positions(&self) -> Vec<LatticePoint> {
        let mut x = LatticePoint::origin(self.dimension);
        let mut out = Vec::with_capacity(self.moves.len() + 1);
        out.push(x.clone());
        for mv in &self.moves {
            x[mv.direction.axis] += mv.direction.sign() * mv.gap as i64;
            out.push(x.clone());
        }
        out
    }

    pub fn endpoint(&self) -> LatticePoint {
        let mut x = LatticePoint::origin(self.dimension);
        for mv in &self.moves {
            x[mv.direction.axis] += mv.direction.sign() * mv.gap as i64;
        }
        x
    }

    /// Checks that every move lands on the coordinate nearest neighbour and that
    /// the reverse move leads back.
    pub fn is_consistent_with<P: PointSet + ?Sized>(&self, env: &P) -> Result<bool> {
        let mut x = LatticePoint::origin(self.dimension);
        for mv in &self.moves {
            if env.gap(&x, mv.direction)? != mv.gap {
                return Ok(false);
            }
            x = x.offset(mv.direction, mv.gap);
            if env.gap(&x, mv.direction.reversed())? != mv.gap {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// CSV dump with columns `step,x_1..x_d`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "step")?;
        for i in 1..=self.dimension {
            write!(out, ",x_{i}")?;
        }
        writeln!(out)?;
        for (n, x) in self.positions().iter().enumerate() {
            write!(out, "{n}")?;
            for c in x.iter() {
                write!(out, ",{c}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Moves `x` one step in place and returns the move taken.
///
/// With `alpha == 0` the direction is uniform over the `2d` neighbours; otherwise
/// neighbour `u` is chosen with probability `|u - x|^alpha / Z(x)`.
pub fn step_in_place<P, R>(env: &P, x: &mut [i64], alpha: f64, rng: &mut R) -> Result<Move>
where
    P: PointSet + ?Sized,
    R: Rng + ?Sized,
{
    let two_d = 2 * env.dimension();
    let (direction, gap) = if alpha == 0.0 {
        let direction = Direction::from_index(rng.gen_range(0..two_d));
        (direction, env.gap(x, direction)?)
    } else {
        let mut gaps = [0u64; 16];
        let mut weights = [0f64; 16];
        let mut gaps_vec;
        let mut weights_vec;
        let (gaps, weights): (&mut [u64], &mut [f64]) = if two_d <= 16 {
            (&mut gaps[..two_d], &mut weights[..two_d])
        } else {
            gaps_vec = vec![0u64; two_d];
            weights_vec = vec![0f64; two_d];
            (&mut gaps_vec, &mut weights_vec)
        };
        let mut z = 0.0;
        for (i, (g, w)) in gaps.iter_mut().zip(weights.iter_mut()).enumerate() {
            *g = env.gap(x, Direction::from_index(i))?;
            *w = (*g as f64).powf(alpha);
            z += *w;
        }
        let mut u = rng.gen::<f64>() * z;
        let mut pick = two_d - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        (Direction::from_index(pick), gaps[pick])
    };
    x[direction.axis] += direction.sign() * gap as i64;
    Ok(Move { direction, gap })
}

/// One step from `x`, returning the new site.
pub fn step<P, R>(env: &P, x: &LatticePoint, alpha: f64, rng: &mut R) -> Result<LatticePoint>
where
    P: PointSet + ?Sized,
    R: Rng + ?Sized,
{
    let mut y = x.clone();
    step_in_place(env, &mut y, alpha, rng)?;
    Ok(y)
}

/// Exact one-step law from `x`: `(neighbour, probability)` in direction order.
pub fn transition_probabilities<P: PointSet + ?Sized>(
    env: &P,
    x: &[i64],
    alpha: f64,
) -> Result<Vec<(LatticePoint, f64)>> {
    let base = LatticePoint::new(x);
    let gaps: Vec<(Direction, u64)> = Direction::all(env.dimension())
        .map(|e| Ok((e, env.gap(x, e)?)))
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = gaps.iter().map(|&(_, g)| (g as f64).powf(alpha)).collect();
    let z: f64 = weights.iter().sum();
    Ok(gaps
        .iter()
        .zip(&weights)
        .map(|(&(e, g), &w)| (base.offset(e, g), w / z))
        .collect())
}

fn walk_replica<P: PointSet + ?Sized>(
    env: &P,
    cfg: &WalkConfig,
    replica: u64,
    env_seed: u64,
) -> Result<Trajectory> {
    let mut rng = replica_rng(cfg.rng_seed, replica);
    let mut x = LatticePoint::origin(env.dimension());
    let mut traj = Trajectory::new(env.dimension(), env_seed);
    traj.moves.reserve(cfg.steps);
    for _ in 0..cfg.steps {
        let mv = step_in_place(env, &mut x, cfg.alpha, &mut rng)?;
        traj.push(mv);
    }
    Ok(traj)
}

fn endpoint_replica<P: PointSet + ?Sized>(
    env: &P,
    cfg: &WalkConfig,
    replica: u64,
) -> Result<LatticePoint> {
    let mut rng = replica_rng(cfg.rng_seed, replica);
    let mut x = LatticePoint::origin(env.dimension());
    for _ in 0..cfg.steps {
        step_in_place(env, &mut x, cfg.alpha, &mut rng)?;
    }
    Ok(x)
}

/// `m` independent trajectories in one fixed environment.
pub fn run_quenched<P>(env: &P, env_seed: u64, cfg: &WalkConfig) -> Result<Vec<Trajectory>>
where
    P: PointSet + Sync + ?Sized,
{
    cfg.validate()?;
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| walk_replica(env, cfg, r, env_seed))
        .collect()
}

/// One trajectory per replica, each in a fresh environment.
pub fn run_annealed(cfg: &WalkConfig, env_cfg: &EnvironmentConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    env_cfg.validate()?;
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let seed = replica_env_seed(env_cfg.seed, r);
            let env = Environment::new(env_cfg.clone().with_seed(seed))?;
            walk_replica(&env, cfg, r, seed)
        })
        .collect()
}

/// Endpoints `X_n` of [`run_quenched`] without storing paths.
pub fn quenched_endpoints<P>(env: &P, cfg: &WalkConfig) -> Result<Vec<LatticePoint>>
where
    P: PointSet + Sync + ?Sized,
{
    cfg.validate()?;
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| endpoint_replica(env, cfg, r))
        .collect()
}

/// Endpoints `X_n` of [`run_annealed`] without storing paths.
pub fn annealed_endpoints(cfg: &WalkConfig, env_cfg: &EnvironmentConfig) -> Result<Vec<LatticePoint>> {
    cfg.validate()?;
    env_cfg.validate()?;
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let env = Environment::new(env_cfg.clone().with_seed(replica_env_seed(env_cfg.seed, r)))?;
            endpoint_replica(&env, cfg, r)
        })
        .collect()
}
