//! Two-level cut network for planar environments and Nash-Williams cutset sums.
//!
//! Every horizontal edge of length `k` between consecutive occupied sites is
//! cut into `k` unit edges of conductance `k` on level 1; vertical edges go to
//! level 2. The two levels share a vertex exactly at occupied sites.

use std::io::Write;

use serde::Serialize;

use crate::env::{Environment, PointSet};
use crate::error::{Error, Result};
use crate::lattice::Direction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Level {
    Horizontal,
    Vertical,
}

/// A unit edge from `(x, y)` to `(x, y) + e_level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct UnitEdge {
    pub level: Level,
    pub x: i64,
    pub y: i64,
}

impl UnitEdge {
    pub fn far_end(&self) -> (i64, i64) {
        match self.level {
            Level::Horizontal => (self.x + 1, self.y),
            Level::Vertical => (self.x, self.y + 1),
        }
    }
}

/// Conductances of all unit edges with both endpoints in `[-R, R]^2`.
pub struct CutNetwork {
    radius: i64,
    occupied: Vec<bool>,
    /// `horizontal[row(y) * 2R + (x + R)]` for the edge `(x, y) - (x+1, y)`.
    horizontal: Vec<u32>,
    /// `vertical[col(x) * 2R + (y + R)]` for the edge `(x, y) - (x, y+1)`.
    vertical: Vec<u32>,
}

impl CutNetwork {
    pub fn build(env: &Environment, radius: i64) -> Result<Self> {
        if env.dimension() != 2 {
            return Err(Error::domain("cut network needs d = 2"));
        }
        if radius < 1 {
            return Err(Error::domain("window radius must be at least 1"));
        }
        let side = (2 * radius + 1) as usize;
        let segs = (2 * radius) as usize;
        let mut occupied = vec![false; side * side];
        for (j, y) in (-radius..=radius).enumerate() {
            for (i, x) in (-radius..=radius).enumerate() {
                occupied[j * side + i] = env.is_occupied(&[x, y]);
            }
        }
        let mut horizontal = vec![0u32; side * segs];
        let mut vertical = vec![0u32; side * segs];
        for (line, c) in (-radius..=radius).enumerate() {
            for (axis, table) in [(0usize, &mut horizontal), (1usize, &mut vertical)] {
                let row = &mut table[line * segs..(line + 1) * segs];
                fill_line(env, radius, axis, c, row)?;
            }
        }
        Ok(CutNetwork {
            radius,
            occupied,
            horizontal,
            vertical,
        })
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    /// Conductance of a unit edge, 0 when absent or outside the window.
    pub fn conductance(&self, edge: UnitEdge) -> u32 {
        let r = self.radius;
        let (along, across) = match edge.level {
            Level::Horizontal => (edge.x, edge.y),
            Level::Vertical => (edge.y, edge.x),
        };
        if along < -r || along >= r || across < -r || across > r {
            return 0;
        }
        let segs = (2 * r) as usize;
        let idx = (across + r) as usize * segs + (along + r) as usize;
        match edge.level {
            Level::Horizontal => self.horizontal[idx],
            Level::Vertical => self.vertical[idx],
        }
    }

    /// Whether both levels are identified at `(x, y)`.
    pub fn is_identified(&self, x: i64, y: i64) -> bool {
        let r = self.radius;
        let side = self.side();
        self.occupied[(y + r) as usize * side + (x + r) as usize]
    }

    /// Non-zero conductances of one level, row by row.
    pub fn conductances(&self, level: Level) -> impl Iterator<Item = u32> + '_ {
        let table = match level {
            Level::Horizontal => &self.horizontal,
            Level::Vertical => &self.vertical,
        };
        table.iter().copied().filter(|&c| c > 0)
    }

    /// Distinct network vertices: occupied sites once, other sites once per
    /// level on which they touch an edge.
    pub fn vertex_count(&self) -> usize {
        let r = self.radius;
        let mut count = 0;
        for y in -r..=r {
            for x in -r..=r {
                if self.is_identified(x, y) {
                    count += 1;
                    continue;
                }
                for level in [Level::Horizontal, Level::Vertical] {
                    let (before, after) = match level {
                        Level::Horizontal => (UnitEdge { level, x: x - 1, y }, UnitEdge { level, x, y }),
                        Level::Vertical => (UnitEdge { level, x, y: y - 1 }, UnitEdge { level, x, y }),
                    };
                    if self.conductance(before) > 0 || self.conductance(after) > 0 {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// Unit edges with exactly one endpoint in `[-n, n]^2`.
    pub fn cutset_edges(&self, n: i64) -> Vec<UnitEdge> {
        let mut edges = Vec::with_capacity(8 * n as usize + 4);
        for t in -n..=n {
            edges.push(UnitEdge { level: Level::Horizontal, x: n, y: t });
            edges.push(UnitEdge { level: Level::Horizontal, x: -n - 1, y: t });
            edges.push(UnitEdge { level: Level::Vertical, x: t, y: n });
            edges.push(UnitEdge { level: Level::Vertical, x: t, y: -n - 1 });
        }
        edges.retain(|&e| self.conductance(e) > 0);
        edges
    }
}

/// Conductances of the unit segments `[c, c+1]`, `c in [-R, R)`, along one line.
fn fill_line(env: &Environment, radius: i64, axis: usize, across: i64, out: &mut [u32]) -> Result<()> {
    let at = |t: i64| -> [i64; 2] {
        if axis == 0 {
            [t, across]
        } else {
            [across, t]
        }
    };
    if !env.line_has_points(&at(0), axis) {
        return Ok(());
    }
    let back = Direction::minus(axis);
    let forward = Direction::plus(axis);
    let max_scan = env.config().max_scan as i64;
    let mut a = -radius;
    while !env.is_occupied(&at(a)) {
        a -= 1;
        if -radius - a > max_scan {
            return Err(Error::ScanExceeded {
                from: at(-radius).to_vec().into(),
                direction: back,
                max_scan: max_scan as u64,
            });
        }
    }
    while a < radius {
        let k = env.gap(&at(a), forward)?;
        let b = a + k as i64;
        let lo = a.max(-radius);
        let hi = b.min(radius);
        for t in lo..hi {
            out[(t + radius) as usize] = k as u32;
        }
        a = b;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutsetRow {
    pub n: i64,
    pub conductance: f64,
    pub partial_sum: f64,
}

/// `C_{Π_n}` and `sum_{m <= n} 1 / C_{Π_m}` for `n = 1..=N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutsetReport {
    pub rows: Vec<CutsetRow>,
}

impl CutsetReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,C_Pi_n,partial_sum")?;
        for r in &self.rows {
            writeln!(out, "{},{},{:e}", r.n, r.conductance, r.partial_sum)?;
        }
        Ok(())
    }

    /// Least-squares slope of the partial sums against `ln n`.
    pub fn log_slope(&self) -> f64 {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .map(|r| ((r.n as f64).ln(), r.partial_sum))
            .unzip();
        crate::stats::linear_fit(&x, &y).0
    }
}

pub fn cutset_conductances(net: &CutNetwork, n_max: i64) -> Result<CutsetReport> {
    if n_max >= net.radius() {
        return Err(Error::WindowTooSmall {
            radius: net.radius(),
            requested: n_max,
        });
    }
    let mut partial = 0.0;
    let mut rows = Vec::with_capacity(n_max.max(0) as usize);
    for n in 1..=n_max {
        let c: f64 = net
            .cutset_edges(n)
            .iter()
            .map(|&e| net.conductance(e) as f64)
            .sum();
        if c > 0.0 {
            partial += 1.0 / c;
        }
        rows.push(CutsetRow {
            n,
            conductance: c,
            partial_sum: partial,
        });
    }
    Ok(CutsetReport { rows })
}

/// `sum_{n <= N} 1 / C_{Π_n}`.
pub fn nash_williams_sum(report: &CutsetReport, n: i64) -> f64 {
    report
        .rows
        .iter()
        .take_while(|r| r.n <= n)
        .last()
        .map_or(0.0, |r| r.partial_sum)
}
