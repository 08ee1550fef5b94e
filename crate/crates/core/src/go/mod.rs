//! Geometric-optics packets `phi_sigma (u_1 + u_2 / sigma) + r` for the two
//! potentials of a pair, their transport residuals and remainders.

mod amplitudes;
pub mod lattice;
mod packet;

pub use amplitudes::{beta_field, build_amplitudes, Amplitudes, BetaMode, GoSetup, Side, StaticTraces};
pub use lattice::{LatticeDirection, RayLattice};
pub use packet::{assemble_packet, packet_residual, remainder, transport_residual, GOPacket, PacketResidual};

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GOParams {
    pub sigma: f64,
    pub omega: [f64; 2],
    pub tau: f64,
    pub xi: [f64; 2],
    pub y: [f64; 2],
    pub delta: f64,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl GOParams {
    /// Parameters with `y = xi / |xi|` (or the normal of `omega` when
    /// `xi = 0`).
    pub fn new(sigma: f64, omega: [f64; 2], tau: f64, xi: [f64; 2], delta: f64) -> Self {
        let n = dot(xi, xi).sqrt();
        let y = if n > 0.0 { [xi[0] / n, xi[1] / n] } else { [-omega[1], omega[0]] };
        Self { sigma, omega, tau, xi, y, delta }
    }

    /// Structural checks that do not depend on a grid.
    pub fn validate(&self, t_final: f64) -> Result<()> {
        if !(self.sigma > 1.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must exceed 1, got {}", self.sigma)));
        }
        if (dot(self.omega, self.omega).sqrt() - 1.0).abs() > 1e-12 || (dot(self.y, self.y).sqrt() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("omega and y must be unit vectors"));
        }
        if dot(self.xi, self.omega).abs() > 1e-12 * (1.0 + dot(self.xi, self.xi).sqrt()) || dot(self.y, self.omega).abs() > 1e-12 {
            return Err(Error::invalid("xi and y must be orthogonal to omega"));
        }
        if !(self.delta > 0.0 && self.delta < t_final / 4.0) {
            return Err(Error::invalid(format!("delta must lie in (0, T/4), got {}", self.delta)));
        }
        if !self.tau.is_finite() {
            return Err(Error::invalid("tau must be finite"));
        }
        Ok(())
    }

    /// Structural checks plus the phase resolution guard of the grid.
    pub fn validate_on(&self, grid: &SpaceTimeGrid) -> Result<()> {
        self.validate(grid.t_final)?;
        let s = self.sigma;
        if s * s * grid.k > FRAC_PI_4 || s * grid.h.max(grid.hy) > FRAC_PI_4 {
            return Err(Error::invalid(format!(
                "sigma = {s} is not resolved: sigma^2 k = {:.3}, sigma h = {:.3}, both must be <= pi/4 (largest usable sigma {:.3})",
                s * s * grid.k,
                s * grid.h.max(grid.hy),
                sigma_max(grid)
            )));
        }
        Ok(())
    }

    pub fn bracket(&self) -> f64 {
        (1.0 + self.tau * self.tau + dot(self.xi, self.xi)).sqrt()
    }
}

/// Largest phase frequency the grid resolves.
pub fn sigma_max(grid: &SpaceTimeGrid) -> f64 {
    (FRAC_PI_4 / grid.k).sqrt().min(FRAC_PI_4 / grid.h.max(grid.hy))
}

/// `phi_sigma(t, x) = exp(i sigma (-sigma t + x.omega))`.
pub fn phase(sigma: f64, omega: [f64; 2], t: f64, x: f64, y: f64) -> C64 {
    C64::from_polar(1.0, sigma * (-sigma * t + x * omega[0] + y * omega[1]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cutoff {
    pub delta: f64,
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

/// Smooth step 0 -> 1 on `[0, 1]` with its first two derivatives.
fn smooth_step(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    // logistic of E = 1/s - 1/(1-s), taken from the side where it is small
    let e = 1.0 / s - 1.0 / (1.0 - s);
    if e.abs() > 700.0 {
        return (if e > 0.0 { 0.0 } else { 1.0 }, 0.0, 0.0);
    }
    let l = 1.0 / (1.0 + e.exp());
    let dl = -l * (1.0 - l);
    let ddl = l * (1.0 - l) * (1.0 - 2.0 * l);
    let de = -1.0 / (s * s) - 1.0 / ((1.0 - s) * (1.0 - s));
    let dde = 2.0 / (s * s * s) - 2.0 / ((1.0 - s) * (1.0 - s) * (1.0 - s));
    (l, dl * de, ddl * de * de + dl * dde)
}

/// Time cutoff: zero outside `(delta, T - delta)`, one on `[2 delta, T - 2 delta]`.
pub fn cutoff_chi(delta: f64, grid: &SpaceTimeGrid) -> Result<Cutoff> {
    let t_final = grid.t_final;
    if !(delta > 0.0 && delta < t_final / 4.0) {
        return Err(Error::invalid(format!("delta must lie in (0, T/4), got {delta}")));
    }
    let mut c = Cutoff { delta, values: vec![], d1: vec![], d2: vec![] };
    for m in 0..grid.n_levels() {
        let t = grid.t(m);
        let (v, d, dd) = if t < 0.5 * t_final {
            let (a, b, cc) = smooth_step((t - delta) / delta);
            (a, b / delta, cc / (delta * delta))
        } else {
            let (a, b, cc) = smooth_step((t_final - delta - t) / delta);
            (a, -b / delta, cc / (delta * delta))
        };
        c.values.push(v);
        c.d1.push(d);
        c.d2.push(dd);
    }
    Ok(c)
}

impl Cutoff {
    /// One-sided/centred difference of the samples, the time stencil used by
    /// the amplitude builder.
    pub fn dt_samples(&self, k: f64) -> Vec<f64> {
        (0..self.values.len()).map(|m| dt_apply(self.values.len() - 1, m, k, |j| self.values[j])).collect()
    }
}

/// Second-order time derivative stencil at level `m` of `0..=nt`.
pub(crate) fn dt_stencil(nt: usize, m: usize) -> [(usize, f64); 3] {
    if m == 0 {
        [(0, -1.5), (1, 2.0), (2, -0.5)]
    } else if m == nt {
        [(nt, 1.5), (nt - 1, -2.0), (nt - 2, 0.5)]
    } else {
        [(m - 1, -0.5), (m, 0.0), (m + 1, 0.5)]
    }
}

pub(crate) fn dt_apply(nt: usize, m: usize, k: f64, f: impl Fn(usize) -> f64) -> f64 {
    dt_stencil(nt, m).iter().map(|&(j, c)| c * f(j)).sum::<f64>() / k
}
