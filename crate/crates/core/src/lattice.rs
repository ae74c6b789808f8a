//! Integer lattice points and the `2d` signed coordinate directions.

use std::fmt;
use std::ops::{Deref, DerefMut};

use smallvec::SmallVec;

/// A point of `Z^d`. Stored inline for `d <= 4`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LatticePoint(SmallVec<[i64; 4]>);

impl LatticePoint {
    pub fn origin(dimension: usize) -> Self {
        LatticePoint(SmallVec::from_elem(0, dimension))
    }

    pub fn new(coords: &[i64]) -> Self {
        LatticePoint(SmallVec::from_slice(coords))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// `self + k * e`.
    pub fn offset(&self, direction: Direction, k: u64) -> Self {
        let mut p = self.clone();
        p.0[direction.axis] += direction.sign() * k as i64;
        p
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }
}

impl From<Vec<i64>> for LatticePoint {
    fn from(v: Vec<i64>) -> Self {
        LatticePoint(SmallVec::from_vec(v))
    }
}

impl<const N: usize> From<[i64; N]> for LatticePoint {
    fn from(v: [i64; N]) -> Self {
        LatticePoint::new(&v)
    }
}

impl Deref for LatticePoint {
    type Target = [i64];
    fn deref(&self) -> &[i64] {
        &self.0
    }
}

impl DerefMut for LatticePoint {
    fn deref_mut(&mut self) -> &mut [i64] {
        &mut self.0
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// One of the `2d` signed unit vectors `±e_i`. `axis` is zero-based.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction {
    pub axis: usize,
    pub positive: bool,
}

impl Direction {
    pub fn new(axis: usize, positive: bool) -> Self {
        Direction { axis, positive }
    }

    pub fn plus(axis: usize) -> Self {
        Direction::new(axis, true)
    }

    pub fn minus(axis: usize) -> Self {
        Direction::new(axis, false)
    }

    pub fn sign(self) -> i64 {
        if self.positive {
            1
        } else {
            -1
        }
    }

    pub fn reversed(self) -> Self {
        Direction::new(self.axis, !self.positive)
    }

    /// Dense index in `0..2d`: `+e_i -> 2i`, `-e_i -> 2i + 1`.
    pub fn index(self) -> usize {
        2 * self.axis + usize::from(!self.positive)
    }

    pub fn from_index(index: usize) -> Self {
        Direction::new(index / 2, index.is_multiple_of(2))
    }

    /// All `2d` directions in index order.
    pub fn all(dimension: usize) -> impl Iterator<Item = Direction> {
        (0..2 * dimension).map(Direction::from_index)
    }
}

impl fmt::Debug for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.positive { '+' } else { '-' };
        write!(f, "{s}e{}", self.axis + 1)
    }
}
