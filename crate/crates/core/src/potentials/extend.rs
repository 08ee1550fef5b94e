//! Compactly supported continuation of potentials beyond the unit square.

use super::families::smooth_bump;
use super::PotentialPair;
use crate::error::{Error, Result};
use crate::field::RealField;
use crate::grid::{SpaceTimeGrid, CENTER};

/// Square node lattice that contains the unit-square grid and the disc of
/// radius `r_ext` about the centre, with the same spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedGrid {
    pub npad: usize,
    pub n1: usize,
    pub n2: usize,
    pub h: f64,
    pub hy: f64,
    pub r_ext: f64,
}

impl PaddedGrid {
    pub fn new(grid: &SpaceTimeGrid, pad: f64) -> Result<Self> {
        if !(pad > 0.0) {
            return Err(Error::invalid(format!("extension pad must be positive, got {pad}")));
        }
        let r_ext = std::f64::consts::FRAC_1_SQRT_2 + pad;
        // two spare rows so centred stencils never read past the edge
        let reach = r_ext - 0.5;
        let npad = ((reach / grid.h.min(grid.hy)).ceil() as usize) + 2;
        Ok(Self { npad, n1: grid.nx + 2 + 2 * npad, n2: grid.ny + 2 + 2 * npad, h: grid.h, hy: grid.hy, r_ext })
    }

    pub fn x(&self, p: usize) -> f64 {
        (p as f64 - self.npad as f64) * self.h
    }

    pub fn y(&self, p: usize) -> f64 {
        (p as f64 - self.npad as f64) * self.hy
    }

    /// Periods of the lattice seen as a torus, used for FFT frequencies.
    pub fn periods(&self) -> [f64; 2] {
        [self.n1 as f64 * self.h, self.n2 as f64 * self.hy]
    }

    pub fn slice_len(&self) -> usize {
        self.n1 * self.n2
    }

    /// Padded index of unit-square node `(ix, iy)`.
    pub fn from_inner(&self, ix: usize, iy: usize) -> (usize, usize) {
        (ix + self.npad, iy + self.npad)
    }

    /// Unit-square node index if `(p1, p2)` lies in the closed square.
    pub fn to_inner(&self, grid: &SpaceTimeGrid, p1: usize, p2: usize) -> Option<(usize, usize)> {
        let i = p1.checked_sub(self.npad)?;
        let j = p2.checked_sub(self.npad)?;
        (i <= grid.nx + 1 && j <= grid.ny + 1).then_some((i, j))
    }

    /// Radial cutoff: 1 on the circumscribed disc of the square, smooth
    /// decay to 0 at `r_ext`.
    pub fn cutoff(&self, x: f64, y: f64) -> f64 {
        let r = ((x - CENTER[0]).powi(2) + (y - CENTER[1]).powi(2)).sqrt();
        let r0 = std::f64::consts::FRAC_1_SQRT_2;
        if r <= r0 {
            1.0
        } else {
            let s = (r - r0) / (self.r_ext - r0);
            smooth_bump(s * s)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedPotential {
    pub padded: PaddedGrid,
    pub ax: RealField,
    pub ay: RealField,
    pub q: RealField,
}

impl ExtendedPotential {
    pub fn r_ext(&self) -> f64 {
        self.padded.r_ext
    }

    /// True when only one time level is stored.
    pub fn is_static(&self) -> bool {
        self.ax.dims()[0] == 1
    }

    pub fn sub(&self, other: &ExtendedPotential) -> ExtendedPotential {
        ExtendedPotential {
            padded: self.padded.clone(),
            ax: self.ax.zip_map(&other.ax, |a, b| a - b),
            ay: self.ay.zip_map(&other.ay, |a, b| a - b),
            q: self.q.zip_map(&other.q, |a, b| a - b),
        }
    }
}

fn extend_field(grid: &SpaceTimeGrid, pg: &PaddedGrid, f: &RealField, nl: usize) -> RealField {
    let (nx1, ny1) = (grid.nx + 1, grid.ny + 1);
    let mut weights = vec![0.0; pg.slice_len()];
    let mut source = vec![(0usize, 0usize); pg.slice_len()];
    for p1 in 0..pg.n1 {
        for p2 in 0..pg.n2 {
            let i = (p1 as isize - pg.npad as isize).clamp(0, nx1 as isize) as usize;
            let j = (p2 as isize - pg.npad as isize).clamp(0, ny1 as isize) as usize;
            source[p1 * pg.n2 + p2] = (i, j);
            weights[p1 * pg.n2 + p2] = if pg.to_inner(grid, p1, p2).is_some() {
                1.0
            } else {
                pg.cutoff(pg.x(p1), pg.y(p2))
            };
        }
    }
    let mut out = RealField::zeros([nl, pg.n1, pg.n2]);
    for m in 0..nl {
        let dst = out.slice_mut(m);
        for (p, (&(i, j), &w)) in source.iter().zip(&weights).enumerate() {
            if w != 0.0 {
                let v = f.get(m, i, j);
                dst[p] = if w == 1.0 { v } else { w * v };
            }
        }
    }
    out
}

/// Constant-normal continuation of wall values, times the radial cutoff.
/// A time-independent pair is extended as a single level.
pub fn extend_potential(grid: &SpaceTimeGrid, p: &PotentialPair, pad: f64) -> Result<ExtendedPotential> {
    extend_levels(grid, p, pad, if p.is_time_independent() { 1 } else { grid.n_levels() })
}

fn extend_levels(grid: &SpaceTimeGrid, p: &PotentialPair, pad: f64, nl: usize) -> Result<ExtendedPotential> {
    let padded = PaddedGrid::new(grid, pad)?;
    Ok(ExtendedPotential {
        ax: extend_field(grid, &padded, &p.ax, nl),
        ay: extend_field(grid, &padded, &p.ay, nl),
        q: extend_field(grid, &padded, &p.q, nl),
        padded,
    })
}

/// Extends `p1`, then overwrites the closed square by `p2`, so the two
/// extensions coincide outside the square.
pub fn extend_pair(
    grid: &SpaceTimeGrid,
    p1: &PotentialPair,
    p2: &PotentialPair,
    pad: f64,
) -> Result<(ExtendedPotential, ExtendedPotential)> {
    let nl = if p1.is_time_independent() && p2.is_time_independent() { 1 } else { grid.n_levels() };
    let e1 = extend_levels(grid, p1, pad, nl)?;
    let mut e2 = e1.clone();
    let pg = &e1.padded;
    for m in 0..nl {
        for i in 0..=grid.nx + 1 {
            for j in 0..=grid.ny + 1 {
                let (a, b) = pg.from_inner(i, j);
                e2.ax.set(m, a, b, p2.ax.get(m, i, j));
                e2.ay.set(m, a, b, p2.ay.get(m, i, j));
                e2.q.set(m, a, b, p2.q.get(m, i, j));
            }
        }
    }
    Ok((e1, e2))
}
