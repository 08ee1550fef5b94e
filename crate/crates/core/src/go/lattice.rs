//! Rays along lattice-commensurate directions of the padded grid.
//!
//! A direction `omega ∝ (p, q)` with coprime integers visits lattice nodes
//! exactly, every node lies on one line, and line integrals reduce to
//! trapezoid sums with step `h sqrt(p^2 + q^2)`.

use crate::error::{Error, Result};
use crate::grid::CENTER;
use crate::potentials::PaddedGrid;
use crate::C64;

/// Largest integer component searched when matching a unit vector.
pub const MAX_COMPONENT: i64 = 32;

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct LatticeDirection {
    pub p: i64,
    pub q: i64,
}

impl LatticeDirection {
    pub fn new(p: i64, q: i64) -> Result<Self> {
        if p == 0 && q == 0 {
            return Err(Error::invalid("zero lattice direction"));
        }
        let g = gcd(p, q);
        Ok(Self { p: p / g, q: q / g })
    }

    /// Direction matching a unit vector within `1e-12`.
    pub fn from_omega(omega: [f64; 2]) -> Result<Self> {
        for p in -MAX_COMPONENT..=MAX_COMPONENT {
            for q in -MAX_COMPONENT..=MAX_COMPONENT {
                if (p, q) == (0, 0) || gcd(p, q) != 1 {
                    continue;
                }
                let d = Self { p, q };
                let o = d.omega();
                if (o[0] - omega[0]).abs() <= 1e-12 && (o[1] - omega[1]).abs() <= 1e-12 {
                    return Ok(d);
                }
            }
        }
        Err(Error::invalid(format!(
            "direction ({}, {}) is not commensurate with the grid (components up to {MAX_COMPONENT})",
            omega[0], omega[1]
        )))
    }

    /// Rotation of the integer frequency `(m1, m2)` by +pi/2, with the sign
    /// fixed so that `m` and `-m` share a direction.
    pub fn perpendicular_to(m1: i64, m2: i64) -> Result<Self> {
        let d = Self::new(-m2, m1)?;
        Ok(if d.p > 0 || (d.p == 0 && d.q > 0) { d } else { Self { p: -d.p, q: -d.q } })
    }

    pub fn omega(&self) -> [f64; 2] {
        let n = ((self.p * self.p + self.q * self.q) as f64).sqrt();
        [self.p as f64 / n, self.q as f64 / n]
    }

    /// Unit vector rotated by +pi/2.
    pub fn normal(&self) -> [f64; 2] {
        let o = self.omega();
        [-o[1], o[0]]
    }

    pub fn step(&self, h: f64) -> f64 {
        h * ((self.p * self.p + self.q * self.q) as f64).sqrt()
    }
}

/// One lattice line: padded slice indices in increasing `s = (x - c).omega`.
#[derive(Clone, Debug)]
pub struct Line {
    pub nodes: Vec<usize>,
    pub s0: f64,
    /// `(k, theta)`: the base `s = 0` sits at `k + theta` with a full cubic
    /// stencil `k-1..=k+2` available.
    pub base: Option<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct RayLattice {
    pub dir: LatticeDirection,
    pub h_ray: f64,
    pub lines: Vec<Line>,
    /// `(line, position)` of every padded node.
    pub locate: Vec<(u32, u32)>,
    n2: usize,
}

impl RayLattice {
    pub fn new(pg: &PaddedGrid, dir: LatticeDirection) -> Result<Self> {
        if (pg.h - pg.hy).abs() > 1e-15 * pg.h {
            return Err(Error::invalid("lattice rays need equal spacing in x and y"));
        }
        let reach = dir.p.unsigned_abs().max(dir.q.unsigned_abs()) as usize;
        if reach + 1 > pg.npad {
            return Err(Error::invalid(format!(
                "direction ({}, {}) steps past the padding ({} rows)",
                dir.p, dir.q, pg.npad
            )));
        }
        let x0 = -(pg.npad as f64) * pg.h;
        Ok(Self::on_lattice(pg.n1, pg.n2, pg.h, [x0, x0], dir))
    }

    /// Lines on an `n1 x n2` node lattice with spacing `h` whose node
    /// `(0, 0)` sits at `origin`.
    pub fn on_lattice(n1: usize, n2: usize, h: f64, origin: [f64; 2], dir: LatticeDirection) -> Self {
        let n2u = n2;
        let (n1, n2) = (n1 as i64, n2 as i64);
        let inside = |a: i64, b: i64| a >= 0 && b >= 0 && a < n1 && b < n2;
        let h_ray = dir.step(h);
        let omega = dir.omega();
        let mut lines = Vec::new();
        let mut locate = vec![(u32::MAX, u32::MAX); n1 as usize * n2u];
        for a in 0..n1 {
            for b in 0..n2 {
                if inside(a - dir.p, b - dir.q) {
                    continue;
                }
                let mut nodes = Vec::new();
                let (mut i, mut j) = (a, b);
                while inside(i, j) {
                    let idx = (i * n2 + j) as usize;
                    locate[idx] = (lines.len() as u32, nodes.len() as u32);
                    nodes.push(idx);
                    i += dir.p;
                    j += dir.q;
                }
                let (x, y) = (origin[0] + a as f64 * h, origin[1] + b as f64 * h);
                let s0 = (x - CENTER[0]) * omega[0] + (y - CENTER[1]) * omega[1];
                let pos = -s0 / h_ray;
                let k = pos.floor();
                let base = (k >= 1.0 && (k as usize) + 2 < nodes.len()).then(|| (k as usize, pos - k));
                lines.push(Line { nodes, s0, base });
            }
        }
        Self { dir, h_ray, lines, locate, n2: n2u }
    }

    /// Cumulative trapezoid along every line, from the line start.
    pub fn cumulative<T>(&self, f: &[T], out: &mut [T])
    where
        T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    {
        let hh = 0.5 * self.h_ray;
        for line in &self.lines {
            let mut acc = T::default();
            let mut prev = f[line.nodes[0]];
            out[line.nodes[0]] = acc;
            for &n in &line.nodes[1..] {
                let cur = f[n];
                acc = acc + (prev + cur) * hh;
                out[n] = acc;
                prev = cur;
            }
        }
    }

    /// Full-line trapezoid of `f`, one value per line.
    pub fn line_totals(&self, f: &[f64]) -> Vec<f64> {
        self.lines
            .iter()
            .map(|l| {
                let s: f64 = l.nodes.iter().map(|&n| f[n]).sum();
                self.h_ray * (s - 0.5 * (f[l.nodes[0]] + f[*l.nodes.last().unwrap()]))
            })
            .collect()
    }

    /// Cubic interpolation of a line profile at its base.
    pub fn at_base(&self, line: &Line, f: &[C64]) -> Option<C64> {
        let (k, th) = line.base?;
        let v = [f[line.nodes[k - 1]], f[line.nodes[k]], f[line.nodes[k + 1]], f[line.nodes[k + 2]]];
        // Lagrange weights at nodes -1, 0, 1, 2
        let w = [
            -th * (th - 1.0) * (th - 2.0) / 6.0,
            (th + 1.0) * (th - 1.0) * (th - 2.0) / 2.0,
            -(th + 1.0) * th * (th - 2.0) / 2.0,
            (th + 1.0) * th * (th - 1.0) / 6.0,
        ];
        Some(v[0] * w[0] + v[1] * w[1] + v[2] * w[2] + v[3] * w[3])
    }

    /// Centred difference along the line, `None` at line ends.
    pub fn directional_diff(&self, f: &[C64], node: usize) -> Option<C64> {
        let (l, k) = self.locate[node];
        let line = &self.lines[l as usize];
        let k = k as usize;
        if k == 0 || k + 1 >= line.nodes.len() {
            return None;
        }
        Some((f[line.nodes[k + 1]] - f[line.nodes[k - 1]]) / (2.0 * self.h_ray))
    }

    /// Line neighbours `(prev, next)` of a node, if both exist.
    pub fn neighbours(&self, node: usize) -> Option<(usize, usize)> {
        let (l, k) = self.locate[node];
        let line = &self.lines[l as usize];
        let k = k as usize;
        (k > 0 && k + 1 < line.nodes.len()).then(|| (line.nodes[k - 1], line.nodes[k + 1]))
    }

    pub fn line_of(&self, node: usize) -> &Line {
        &self.lines[self.locate[node].0 as usize]
    }

    pub fn row_len(&self) -> usize {
        self.n2
    }
}
