//! Fourier-domain recovery of `A_1 - A_2` and `q_1 - q_2` from boundary
//! pairings of geometric optics packets.

mod fourier;
mod pairing;

pub use fourier::{
    chi2_field, fourier_coefficient, fourier_identity_check, fourier_identity_gap, key_integral, spectrum_fft, synthesize, FrequencyLattice,
    LatticePoint,
};
pub use pairing::{
    assemble_vector_spectrum, invert_spectrum_a, lattice_direction_for, recover_a, recover_q, spectral_sample_a,
    spectral_samples_a, PairData, RecoveredField, SampleKind,
};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::SpaceTimeGrid;
use crate::potentials::{ExtendedPotential, PotentialPair};
use crate::C64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub tau: f64,
    pub xi: [f64; 2],
    pub lattice: LatticePoint,
    pub direction: [f64; 2],
    pub value: C64,
    /// Size of the dropped remainder, `<tau, xi>^8 delta^-6 sigma^-1`
    /// (electric samples carry their own budget terms).
    pub budget: f64,
}

/// Differences of a potential pair: `Adiff` on the padded grid (zero outside
/// the square), `V` and `qdiff` on the square.
#[derive(Clone, Debug)]
pub struct PairDifference {
    pub adiff: ExtendedPotential,
    pub v: ComplexField,
    pub qdiff: RealField,
}

impl PairDifference {
    pub fn new(grid: &SpaceTimeGrid, p1: &PotentialPair, p2: &PotentialPair, ext1: &ExtendedPotential, ext2: &ExtendedPotential) -> Self {
        let adiff = ext1.sub(ext2);
        let d = p1.sub(p2);
        let mut v = ComplexField::zeros(grid.dims());
        for m in 0..grid.n_levels() {
            for i in 1..=grid.nx {
                for j in 1..=grid.ny {
                    let div = (d.ax.get(m, i + 1, j) - d.ax.get(m, i - 1, j)) / (2.0 * grid.h)
                        + (d.ay.get(m, i, j + 1) - d.ay.get(m, i, j - 1)) / (2.0 * grid.hy);
                    let a1 = p1.ax.get(m, i, j).powi(2) + p1.ay.get(m, i, j).powi(2);
                    let a2 = p2.ax.get(m, i, j).powi(2) + p2.ay.get(m, i, j).powi(2);
                    v.set(m, i, j, C64::new(d.q.get(m, i, j) - (a1 - a2), div));
                }
            }
        }
        Self { adiff, v, qdiff: d.q }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOverrides {
    pub radius: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySchedule {
    pub eps: f64,
    pub n: u32,
    /// `1 / (346 + 9 n)`
    pub r: f64,
    pub radius: f64,
    /// True when `eps^{-3r}` fell below the floor `(T/4)^{-3/2}`.
    pub floored: bool,
    pub delta: f64,
    /// `R^{(116 + 3n)/6}` before any clipping.
    pub sigma_scheduled: f64,
    pub sigma: f64,
    pub sigma_clipped: bool,
    /// Interpolation exponent used for the electric budget, in `(n + 1, inf)`.
    pub p: f64,
}

pub fn schedule_exponent(n: u32) -> f64 {
    1.0 / (346.0 + 9.0 * n as f64)
}

/// Parameter schedule for DN distance `eps`.
pub fn schedule(eps: f64, n: u32, t_final: f64) -> Result<RecoverySchedule> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if n < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    let r = schedule_exponent(n);
    let raw = eps.powf(-3.0 * r);
    // strictly above the floor so that delta stays below T/4
    let floor = (t_final / 4.0).powf(-1.5) * (1.0 + 1e-9);
    let (radius, floored) = if raw > floor { (raw, false) } else { (floor, true) };
    let mut s = from_radius(radius, n);
    s.eps = eps;
    s.floored = floored;
    Ok(s)
}

/// Schedule driven by a given truncation radius.
pub fn from_radius(radius: f64, n: u32) -> RecoverySchedule {
    let sigma = radius.powf((116.0 + 3.0 * n as f64) / 6.0);
    RecoverySchedule {
        eps: radius.powf(-1.0 / (3.0 * schedule_exponent(n))),
        n,
        r: schedule_exponent(n),
        radius,
        floored: false,
        delta: radius.powf(-2.0 / 3.0),
        sigma_scheduled: sigma,
        sigma,
        sigma_clipped: false,
        p: n as f64 + 2.0,
    }
}

impl RecoverySchedule {
    /// Applies overrides, then clips `sigma` to what the grid resolves.
    pub fn for_grid(mut self, grid: &SpaceTimeGrid, ov: &ScheduleOverrides) -> Result<Self> {
        if let Some(r) = ov.radius {
            let keep = (self.eps, self.floored);
            self = from_radius(r, self.n);
            (self.eps, self.floored) = keep;
        }
        if let Some(d) = ov.delta {
            self.delta = d;
        }
        if let Some(s) = ov.sigma {
            self.sigma_scheduled = s;
            self.sigma = s;
        }
        let smax = crate::go::sigma_max(grid);
        if self.sigma > smax {
            log::warn!("scheduled sigma {:.3e} exceeds the grid limit; using {:.4}", self.sigma_scheduled, smax);
            self.sigma = smax * (1.0 - 1e-12);
            self.sigma_clipped = true;
        }
        if !(self.delta > 0.0 && self.delta < grid.t_final / 4.0) {
            return Err(Error::invalid(format!("delta = {} must lie in (0, T/4)", self.delta)));
        }
        if !(self.radius > 1.0) || !(self.sigma > 1.0) {
            return Err(Error::invalid("schedule needs R > 1 and sigma > 1"));
        }
        Ok(self)
    }

    /// `(tau, xi)` lies in `B_R \ E_R`.
    pub fn in_band(&self, tau: f64, xi: [f64; 2]) -> bool {
        let x2 = xi[0] * xi[0] + xi[1] * xi[1];
        (tau * tau + x2).sqrt() < self.radius && x2.sqrt() > self.radius.powf(-3.0 / self.n as f64)
    }

    /// `R^{230 + 6n} eps^2` and `R^{-2/3}`.
    pub fn identity_sides(&self) -> (f64, f64) {
        let n = self.n as f64;
        // logs keep both sides representable for tiny eps
        let lhs = ((230.0 + 6.0 * n) * self.radius.ln() + 2.0 * self.eps.ln()).exp();
        (lhs, self.radius.powf(-2.0 / 3.0))
    }
}
