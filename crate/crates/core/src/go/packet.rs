//! Packets `phi_sigma (u_1 + u_2 / sigma) + r`, residual checks and the
//! remainder solve.

use super::amplitudes::{apply_s, build_amplitudes, Amplitudes, GoSetup, Side};
use super::{dt_stencil, phase, GOParams};
use crate::error::Result;
use crate::field::ComplexField;
use crate::forward::{solve_source, BoundarySeries, SourceTerm, VanishingEnd};
use crate::potentials::PotentialPair;
use crate::C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct PacketResidual {
    /// `|| L_h phi (u1 + u2 / sigma) ||` over interior nodes.
    pub without_remainder: f64,
    /// `sigma^{-1} || phi L_h u2 ||`, what the transport equations leave.
    pub predicted: f64,
    pub rho1: f64,
    pub rho2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GOPacket {
    pub side: usize,
    pub params: GOParams,
    pub u1: ComplexField,
    pub u2: ComplexField,
    pub phase: ComplexField,
    pub remainder: ComplexField,
    /// `phi (u1 + u2 / sigma)` on the wall nodes.
    pub trace: BoundarySeries,
    pub residual: PacketResidual,
}

/// `P_j` restricted to the unit square.
pub(crate) fn side_pair(setup: &GoSetup, side: Side) -> PotentialPair {
    let g = setup.grid;
    let e = setup.ext(side);
    let pick = |f: &crate::field::RealField| {
        crate::field::RealField::from_fn(g.dims(), |m, i, j| f.level(m)[setup.pidx(i, j)])
    };
    PotentialPair::from_fields(g, pick(&e.ax), pick(&e.ay), pick(&e.q)).expect("restriction has the grid shape")
}

/// `(i D_t + Delta_{A_j,h} + q_j) u` at interior nodes, zero on the wall.
pub(crate) fn apply_l(setup: &GoSetup, pair: &PotentialPair, u: &ComplexField) -> ComplexField {
    let g = setup.grid;
    let (n1, n2) = (g.nx + 2, g.ny + 2);
    let mut out = ComplexField::zeros(g.dims());
    for m in 0..=g.nt {
        let dst = out.slice_mut(m);
        apply_s(n1, n2, g.h, g.hy, pair.ax.slice(m), pair.ay.slice(m), pair.q.slice(m), u.slice(m), dst);
        for (j, c) in dt_stencil(g.nt, m) {
            if c == 0.0 {
                continue;
            }
            let uj = u.slice(j);
            for ix in 1..=g.nx {
                for iy in 1..=g.ny {
                    let s = ix * n2 + iy;
                    dst[s] += I * (c / g.k) * uj[s];
                }
            }
        }
    }
    out
}

fn phase_field(setup: &GoSetup) -> ComplexField {
    let g = setup.grid;
    let p = &setup.params;
    ComplexField::from_fn(g.dims(), |m, i, j| phase(p.sigma, p.omega, g.t(m), g.x(i), g.y(j)))
}

/// Normalised residuals of the two transport equations, over nodes whose
/// lattice neighbours along `omega` stay in the square.
pub fn transport_residual(setup: &GoSetup, side: Side, amps: &Amplitudes) -> (f64, f64) {
    let g = setup.grid;
    let pair = side_pair(setup, side);
    let lu1 = apply_l(setup, &pair, &amps.u1);
    let pg = setup.padded();
    let lat = &setup.lattice;
    let om = setup.params.omega;
    let n2 = g.ny + 2;
    let mut stencil = Vec::new();
    for ix in 0..=g.nx + 1 {
        for iy in 0..=g.ny + 1 {
            let p = setup.pidx(ix, iy);
            let Some((a, b)) = lat.neighbours(p) else { continue };
            let inner = |n: usize| pg.to_inner(g, n / pg.n2, n % pg.n2).map(|(i, j)| i * n2 + j);
            if let (Some(pa), Some(pb)) = (inner(a), inner(b)) {
                stencil.push((ix * n2 + iy, p, pa, pb, !g.is_boundary(ix, iy)));
            }
        }
    }
    let e = setup.ext(side);
    let (mut r1, mut r2, mut n1, mut n2s) = (0.0, 0.0, 0.0, 0.0);
    let hr = 2.0 * lat.h_ray;
    for m in 0..=g.nt {
        let (u1, u2, l1) = (amps.u1.slice(m), amps.u2.slice(m), lu1.slice(m));
        n1 += u1.iter().map(|v| v.norm_sqr()).sum::<f64>();
        n2s += u2.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let (ax, ay) = (e.ax.level(m), e.ay.level(m));
        for &(s, p, pa, pb, interior) in &stencil {
            let ia = I * (ax[p] * om[0] + ay[p] * om[1]);
            let d1 = (u1[pb] - u1[pa]) / hr + ia * u1[s];
            r1 += d1.norm_sqr();
            if interior {
                let d2 = 2.0 * I * ((u2[pb] - u2[pa]) / hr + ia * u2[s]) + l1[s];
                r2 += d2.norm_sqr();
            }
        }
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { (a / b).sqrt() } else { a.sqrt() };
    (ratio(r1, n1), ratio(r2, n2s))
}

/// `r_{j,sigma}` with source `-sigma^{-1} phi L_h u_{j,2}`; side 1 vanishes
/// at `t = 0`, side 2 at `t = T`.
pub fn remainder(setup: &GoSetup, side: Side, u2: &ComplexField) -> Result<ComplexField> {
    let g = setup.grid;
    let pair = side_pair(setup, side);
    let lu2 = apply_l(setup, &pair, u2);
    let ph = phase_field(setup);
    let s = setup.params.sigma;
    let f = lu2.zip_map(&ph, |a, b| -(a * b) / s);
    let end = match side {
        Side::One(_) => VanishingEnd::Initial,
        Side::Two => VanishingEnd::Final,
    };
    let src = SourceTerm::new(g, f, end)?;
    solve_source(g, &pair, &src)
}

/// Residual report of `phi (u1 + u2 / sigma)`.
pub fn packet_residual(setup: &GoSetup, side: Side, amps: &Amplitudes) -> PacketResidual {
    let g = setup.grid;
    let pair = side_pair(setup, side);
    let ph = phase_field(setup);
    let s = setup.params.sigma;
    let psi = ComplexField::from_fn(g.dims(), |m, i, j| ph.get(m, i, j) * (amps.u1.get(m, i, j) + amps.u2.get(m, i, j) / s));
    let full = g.l2_norm_c(&apply_l(setup, &pair, &psi));
    let predicted = g.l2_norm_c(&apply_l(setup, &pair, &amps.u2)) / s;
    let (rho1, rho2) = transport_residual(setup, side, amps);
    PacketResidual { without_remainder: full, predicted, rho1, rho2 }
}

pub fn assemble_packet(setup: &GoSetup, side: Side) -> Result<GOPacket> {
    let g = setup.grid;
    let amps = build_amplitudes(setup, side)?;
    let r = remainder(setup, side, &amps.u2)?;
    let ph = phase_field(setup);
    let s = setup.params.sigma;
    let psi = ComplexField::from_fn(g.dims(), |m, i, j| ph.get(m, i, j) * (amps.u1.get(m, i, j) + amps.u2.get(m, i, j) / s));
    let trace = BoundarySeries::from_field(g, &psi);
    let residual = packet_residual(setup, side, &amps);
    Ok(GOPacket { side: side.index(), params: setup.params.clone(), u1: amps.u1, u2: amps.u2, phase: ph, remainder: r, trace, residual })
}
