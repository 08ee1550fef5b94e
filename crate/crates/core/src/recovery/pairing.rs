//! Boundary pairings `<(Lambda_2 - Lambda_1) psi_1, psi_2>` turned into
//! Fourier samples, and the truncated inversion.
//!
//! Two routes compute the pairing. `spectral_sample_a` applies both DN maps
//! to `psi_1`. The batched route runs one adjoint march per potential for
//! the traces `psi_2` of a set of directions; `psi_2` depends only on
//! `(omega, sigma, delta)`, so every `(tau, xi)` sharing a direction reuses it.

use super::fourier::{ft_norm, synthesize, FrequencyLattice, LatticePoint};
use super::{RecoverySchedule, SpectrumSample};
use crate::dnmap::{dn_adjoint_batch, dn_apply, trace_of};
use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::forward::BoundarySeries;
use crate::go::lattice::MAX_COMPONENT;
use crate::go::{phase, BetaMode, GOParams, GoSetup, LatticeDirection, Side, StaticTraces};
use crate::grid::SpaceTimeGrid;
use crate::potentials::{ExtendedPotential, PotentialPair};
use crate::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const I: C64 = C64 { re: 0.0, im: 1.0 };
/// Directions per adjoint batch.
const DIRECTION_CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Magnetic,
    Electric,
}

/// Both potentials of an experiment with their common extension.
#[derive(Clone, Copy)]
pub struct PairData<'a> {
    pub grid: &'a SpaceTimeGrid,
    pub p1: &'a PotentialPair,
    pub p2: &'a PotentialPair,
    pub ext1: &'a ExtendedPotential,
    pub ext2: &'a ExtendedPotential,
}

fn norm2(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Lattice direction closest to `xi^perp`, and `xi` projected onto
/// `omega^perp`. Exact whenever `xi^perp` is commensurate within `reach`.
pub fn lattice_direction_for(xi: [f64; 2], reach: i64) -> Result<(LatticeDirection, [f64; 2])> {
    let reach = reach.min(MAX_COMPONENT);
    if reach < 1 {
        return Err(Error::invalid("padding too thin for any lattice direction"));
    }
    let n = norm2(xi);
    if n == 0.0 {
        return Ok((LatticeDirection::new(1, 0)?, xi));
    }
    let target = [-xi[1] / n, xi[0] / n];
    let mut best: Option<(f64, LatticeDirection)> = None;
    for p in 0..=reach {
        for q in -reach..=reach {
            if (p == 0 && q <= 0) || LatticeDirection::new(p, q)? != (LatticeDirection { p, q }) {
                continue;
            }
            let d = LatticeDirection { p, q };
            let o = d.omega();
            let c = (o[0] * target[0] + o[1] * target[1]).abs();
            if best.is_none_or(|(b, _)| c > b + 1e-15) {
                best = Some((c, d));
            }
        }
    }
    let d = best.expect("reach >= 1 yields candidates").1;
    let o = d.omega();
    let s = xi[0] * o[0] + xi[1] * o[1];
    let proj = if s.abs() <= 1e-12 * n { xi } else { [xi[0] - s * o[0], xi[1] - s * o[1]] };
    Ok((d, proj))
}

fn reach_of(ext: &ExtendedPotential) -> i64 {
    ext.padded.npad as i64 - 1
}

fn budget(params: &GOParams) -> f64 {
    params.bracket().powi(8) * params.delta.powi(-6) / params.sigma
}

fn side_one(kind: SampleKind) -> Side {
    match kind {
        SampleKind::Magnetic => Side::One(BetaMode::Magnetic),
        SampleKind::Electric => Side::One(BetaMode::Electric),
    }
}

/// Magnetic sample value `i (-B / (2 sigma)) (2 pi)^{-3/2}` from a pairing,
/// with `B ~ -2 sigma K` and `i K = (2 pi)^{3/2} |xi| F(chi^2 A).omega`.
pub(crate) fn magnetic_value(b: C64, sigma: f64) -> C64 {
    I * (-b / (2.0 * sigma)) * ft_norm()
}

/// Sample of `|xi| F(chi^2 A)(tau, xi).omega` with both DN maps applied to the
/// GO trace.
pub fn spectral_sample_a(data: PairData, setup: &GoSetup) -> Result<SpectrumSample> {
    let g = data.grid;
    let p = &setup.params;
    let psi1 = StaticTraces::compute(setup, side_one(SampleKind::Magnetic))?.psi(g, p, p.tau);
    let psi2 = StaticTraces::compute(setup, Side::Two)?.psi(g, p, 0.0);
    let c = trace_of(g, &psi2);
    let l2 = dn_apply(g, data.p2, &psi1)?;
    let l1 = dn_apply(g, data.p1, &psi1)?;
    let b = l2.sub(&l1).inner(&c, g);
    let value = magnetic_value(b, p.sigma);
    if !value.is_finite() {
        return Err(Error::numerical("non-finite spectral sample"));
    }
    Ok(SpectrumSample {
        tau: p.tau,
        xi: p.xi,
        lattice: LatticePoint { l: 0, m: [0, 0] },
        direction: p.omega,
        value,
        budget: budget(p),
    })
}

/// Raw pairing at one lattice point.
#[derive(Clone, Debug)]
struct Pairing {
    point: LatticePoint,
    params: GOParams,
    b: C64,
}

/// `B(tau, xi)` for every lattice point, by the batched adjoint route.
fn pairings(data: PairData, lat: &FrequencyLattice, sched: &RecoverySchedule, points: &[LatticePoint], kind: SampleKind) -> Result<Vec<Pairing>> {
    let g = data.grid;
    let reach = reach_of(data.ext1);
    // direction -> xi bin -> points
    let mut groups: BTreeMap<(i64, i64), BTreeMap<[i64; 2], Vec<LatticePoint>>> = BTreeMap::new();
    let mut proj: BTreeMap<[i64; 2], [f64; 2]> = BTreeMap::new();
    for &pt in points {
        let (d, xp) = lattice_direction_for(lat.xi(pt.m), reach)?;
        groups.entry((d.p, d.q)).or_default().entry(pt.m).or_default().push(pt);
        proj.insert(pt.m, xp);
    }
    let dirs: Vec<(i64, i64)> = groups.keys().copied().collect();
    let mut out = Vec::with_capacity(points.len());
    for chunk in dirs.chunks(DIRECTION_CHUNK) {
        let bases: Vec<GoSetup> = chunk
            .iter()
            .map(|&(p, q)| {
                let om = LatticeDirection { p, q }.omega();
                GoSetup::new(g, data.ext1, data.ext2, GOParams::new(sched.sigma, om, 0.0, [0.0, 0.0], sched.delta))
            })
            .collect::<Result<_>>()?;
        let tests: Vec<_> = bases
            .par_iter()
            .map(|s| StaticTraces::compute(s, Side::Two).map(|t| trace_of(g, &t.psi(g, &s.params, 0.0))))
            .collect::<Result<_>>()?;
        let refs: Vec<_> = tests.iter().collect();
        let z1 = dn_adjoint_batch(g, data.p1, &refs)?;
        let z2 = dn_adjoint_batch(g, data.p2, &refs)?;
        for (c, key) in chunk.iter().enumerate() {
            let zd = BoundarySeries {
                n_levels: z2[c].n_levels,
                n_nodes: z2[c].n_nodes,
                data: z2[c].data.iter().zip(&z1[c].data).map(|(a, b)| a - b).collect(),
            };
            let bins: Vec<(&[i64; 2], &Vec<LatticePoint>)> = groups[key].iter().collect();
            let per_bin: Vec<Vec<Pairing>> = bins
                .par_iter()
                .map(|(m, pts)| -> Result<Vec<Pairing>> {
                    let s = bases[c].with_frequency(0.0, proj[*m])?;
                    let tr = StaticTraces::compute(&s, side_one(kind))?;
                    let sums = level_sums(g, &s.params, &tr, &zd);
                    Ok(pts
                        .iter()
                        .map(|&pt| {
                            let tau = lat.tau(pt.l);
                            let b = (0..g.n_levels())
                                .map(|m| C64::from_polar(1.0, -g.t(m) * tau) * (sums[m][0] + (tau * sums[m][1] + sums[m][2]) / s.params.sigma))
                                .sum();
                            let mut params = s.params.clone();
                            params.tau = tau;
                            Pairing { point: pt, params, b }
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            out.extend(per_bin.into_iter().flatten());
        }
    }
    out.sort_by_key(|p| p.point);
    Ok(out)
}

/// Per level: `sum_b phi conj(Z) {w, U, V}`.
fn level_sums(g: &SpaceTimeGrid, p: &GOParams, tr: &StaticTraces, zd: &BoundarySeries) -> Vec<[C64; 3]> {
    let nodes = g.boundary_nodes();
    (0..g.n_levels())
        .map(|m| {
            let t = g.t(m);
            let mut acc = [C64::new(0.0, 0.0); 3];
            for (b, n) in nodes.iter().enumerate() {
                let z = zd.get(m, b).conj();
                if z == C64::new(0.0, 0.0) {
                    continue;
                }
                let f = phase(p.sigma, p.omega, t, g.x(n.ix), g.y(n.iy)) * z;
                acc[0] += f * tr.w.get(m, b);
                acc[1] += f * tr.u.get(m, b);
                acc[2] += f * tr.v.get(m, b);
            }
            acc
        })
        .collect()
}

/// Magnetic samples at the given lattice points.
pub fn spectral_samples_a(data: PairData, lat: &FrequencyLattice, sched: &RecoverySchedule, points: &[LatticePoint]) -> Result<Vec<SpectrumSample>> {
    let ps = pairings(data, lat, sched, points, SampleKind::Magnetic)?;
    ps.into_iter()
        .map(|p| {
            let value = magnetic_value(p.b, p.params.sigma);
            if !value.is_finite() {
                return Err(Error::numerical("non-finite spectral sample"));
            }
            Ok(SpectrumSample {
                tau: p.params.tau,
                xi: p.params.xi,
                lattice: p.point,
                direction: p.params.omega,
                value,
                budget: budget(&p.params),
            })
        })
        .collect()
}

/// `sum_k (sample_k / |xi|) e_k` over an orthonormal basis of `xi^perp`.
pub fn assemble_vector_spectrum(samples: &[SpectrumSample]) -> Result<[C64; 2]> {
    let Some(first) = samples.first() else {
        return Err(Error::invalid("no samples to assemble"));
    };
    let nxi = norm2(first.xi);
    if nxi == 0.0 {
        return Err(Error::invalid("the vector spectrum is undefined at xi = 0"));
    }
    let mut out = [C64::new(0.0, 0.0); 2];
    for s in samples {
        let e = s.direction;
        out[0] += s.value / nxi * e[0];
        out[1] += s.value / nxi * e[1];
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RecoveredField {
    /// Recovered components on the unit-square grid (`[ax, ay]` or `[q]`).
    pub components: Vec<RealField>,
    /// Largest imaginary part left by the synthesis.
    pub imag_max: f64,
    pub samples: Vec<SpectrumSample>,
    pub schedule: RecoverySchedule,
}

impl RecoveredField {
    pub fn sup(&self) -> f64 {
        self.components.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }
}

fn real_parts(f: &ComplexField) -> (RealField, f64) {
    let im = f.data().iter().fold(0.0f64, |a, v| a.max(v.im.abs()));
    (f.map(|v| v.re), im)
}

/// Truncated inversion: samples on `B_R \ E_R`, zero elsewhere.
pub fn invert_spectrum_a(
    lat: &FrequencyLattice,
    data: PairData,
    sched: &RecoverySchedule,
    spectrum: &[(LatticePoint, [C64; 2])],
) -> Result<(Vec<RealField>, f64)> {
    let mut cx = Vec::with_capacity(spectrum.len());
    let mut cy = Vec::with_capacity(spectrum.len());
    for &(pt, v) in spectrum {
        let (tau, xi) = lat.frequency(pt);
        if !sched.in_band(tau, xi) {
            continue;
        }
        if pt.l.unsigned_abs() as usize * 2 >= lat.nt || pt.m[0].unsigned_abs() as usize * 2 >= lat.n1 || pt.m[1].unsigned_abs() as usize * 2 >= lat.n2 {
            return Err(Error::invalid("spectrum point outside the frequency lattice"));
        }
        cx.push((pt, v[0]));
        cy.push((pt, v[1]));
    }
    let pg = &data.ext1.padded;
    let (ax, ix) = real_parts(&synthesize(lat, data.grid, pg, &cx));
    let (ay, iy) = real_parts(&synthesize(lat, data.grid, pg, &cy));
    Ok((vec![ax, ay], ix.max(iy)))
}

/// Recovered `chi^2 (A_1 - A_2)` from DN pairings over `B_R \ E_R`.
pub fn recover_a(data: PairData, sched: &RecoverySchedule) -> Result<RecoveredField> {
    let lat = FrequencyLattice::new(data.grid, &data.ext1.padded);
    let points = lat.points(|t, x| sched.in_band(t, x));
    let samples = spectral_samples_a(data, &lat, sched, &points)?;
    let spectrum: Vec<_> = samples
        .iter()
        .map(|s| assemble_vector_spectrum(std::slice::from_ref(s)).map(|v| (s.lattice, v)))
        .collect::<Result<_>>()?;
    let (components, imag_max) = invert_spectrum_a(&lat, data, sched, &spectrum)?;
    Ok(RecoveredField { components, imag_max, samples, schedule: sched.clone() })
}

/// Recovered `chi^2 (q_1 - q_2)` from electric-mode pairings, with the
/// contribution of the recovered `A` removed.
pub fn recover_q(data: PairData, sched: &RecoverySchedule, a_rec: &RecoveredField) -> Result<RecoveredField> {
    if a_rec.components.len() != 2 {
        return Err(Error::invalid("recover_q needs the recovered magnetic field"));
    }
    let g = data.grid;
    let lat = FrequencyLattice::new(g, &data.ext1.padded);
    let points = lat.points(|t, x| sched.in_band(t, x));
    let ps = pairings(data, &lat, sched, &points, SampleKind::Electric)?;
    let a_sup = a_rec.sup();
    let corr = if a_sup > 0.0 { Some(MagneticCorrection::new(data, &a_rec.components)) } else { None };
    let mut samples = Vec::with_capacity(ps.len());
    let mut coeffs = Vec::with_capacity(ps.len());
    for p in ps {
        let pa = match &corr {
            Some(c) => c.pairing_part(data, &p.params, BetaMode::Electric)?,
            None => C64::new(0.0, 0.0),
        };
        let value = (p.b - pa) * ft_norm();
        if !value.is_finite() {
            return Err(Error::numerical("non-finite electric sample"));
        }
        let br = p.params.bracket();
        let (d, s) = (p.params.delta, p.params.sigma);
        let budget = a_sup * br.powi(8) * d.powi(-6) * s + br.powi(6) * d.powi(-4) / s + a_sup;
        coeffs.push((p.point, value));
        samples.push(SpectrumSample { tau: p.params.tau, xi: p.params.xi, lattice: p.point, direction: p.params.omega, value, budget });
    }
    let (q, imag_max) = real_parts(&synthesize(&lat, g, &data.ext1.padded, &coeffs));
    Ok(RecoveredField { components: vec![q], imag_max, samples, schedule: sched.clone() })
}

/// `int (2i A.grad + i div A - A.(A_1 + A_2)) u_1 conj(u_2)` for the
/// recovered `A`, with `u_j` the packets without remainder.
struct MagneticCorrection {
    a: [RealField; 2],
    c: ComplexField,
}

impl MagneticCorrection {
    fn new(data: PairData, a: &[RealField]) -> Self {
        let g = data.grid;
        let mut c = ComplexField::zeros(g.dims());
        for m in 0..g.n_levels() {
            for i in 1..=g.nx {
                for j in 1..=g.ny {
                    let div = (a[0].get(m, i + 1, j) - a[0].get(m, i - 1, j)) / (2.0 * g.h)
                        + (a[1].get(m, i, j + 1) - a[1].get(m, i, j - 1)) / (2.0 * g.hy);
                    let sx = data.p1.ax.get(m, i, j) + data.p2.ax.get(m, i, j);
                    let sy = data.p1.ay.get(m, i, j) + data.p2.ay.get(m, i, j);
                    c.set(m, i, j, C64::new(-(a[0].get(m, i, j) * sx + a[1].get(m, i, j) * sy), div));
                }
            }
        }
        Self { a: [a[0].clone(), a[1].clone()], c }
    }

    fn pairing_part(&self, data: PairData, params: &GOParams, mode: BetaMode) -> Result<C64> {
        let g = data.grid;
        let s = GoSetup::new(g, data.ext1, data.ext2, params.clone())?;
        let [w1, u1, v1] = s.static_parts_on_square(Side::One(mode))?;
        let [w2, u2, v2] = s.static_parts_on_square(Side::Two)?;
        let (sig, tau, om) = (params.sigma, params.tau, params.omega);
        let n2 = g.ny + 2;
        let area = g.h * g.hy;
        let mut total = C64::new(0.0, 0.0);
        let mut f = vec![C64::new(0.0, 0.0); w1.len()];
        for m in 0..g.n_levels() {
            let (chi, dchi) = (s.chi.values[m], s.chi.d1[m]);
            if chi == 0.0 {
                continue;
            }
            // u_1 = phi e^{-i t tau} a_1, a_1 = chi (w + (tau U + V)/sigma) + i chi' U / sigma
            for p in 0..f.len() {
                f[p] = chi * (w1[p] + (tau * u1[p] + v1[p]) / sig) + I * dchi * u1[p] / sig;
            }
            let (ax, ay, c) = (self.a[0].slice(m), self.a[1].slice(m), self.c.slice(m));
            let mut acc = C64::new(0.0, 0.0);
            for i in 1..=g.nx {
                for j in 1..=g.ny {
                    let p = i * n2 + j;
                    let a2 = chi * (w2[p] + v2[p] / sig) + I * dchi * u2[p] / sig;
                    let gx = (f[p + n2] - f[p - n2]) / (2.0 * g.h) + I * sig * om[0] * f[p];
                    let gy = (f[p + 1] - f[p - 1]) / (2.0 * g.hy) + I * sig * om[1] * f[p];
                    acc += (2.0 * I * (ax[p] * gx + ay[p] * gy) + c[p] * f[p]) * a2.conj();
                }
            }
            total += g.time_weight(m) * C64::from_polar(area, -g.t(m) * tau) * acc;
        }
        Ok(total)
    }
}
