//! Amplitudes `u_{j,1}`, `u_{j,2}` on the padded lattice.
//!
//! The `e^{-i t tau}` factor of the first side is kept out of the sampled
//! fields: with `u_{1,1} = e^{-i t tau} w`, the operator acts as
//! `L(e^{-i t tau} w) = e^{-i t tau} (tau w + L_h w)` and
//! `u_{1,2} = e^{-i t tau} (tau R[w] + R[L_h w])`, where `R` is the ray
//! integral solving the second transport equation. All `tau` share `w`.

use super::lattice::{LatticeDirection, RayLattice};
use super::{cutoff_chi, dt_stencil, Cutoff, GOParams};
use crate::error::{Error, Result};
use crate::field::{ComplexField, Field3};
use crate::forward::BoundarySeries;
use crate::grid::SpaceTimeGrid;
use crate::potentials::{ExtendedPotential, PaddedGrid};
use crate::C64;
use std::collections::HashMap;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    Magnetic,
    Electric,
}

/// Side 1 carries `beta` and the potential `A~_1`; side 2 uses `A~_2` only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    One(BetaMode),
    Two,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::One(_) => 1,
            Side::Two => 2,
        }
    }
}

/// `Delta_{A,h} u + q u` on the interior of an `n1 x n2` lattice, the
/// negative of the forward Hamiltonian stencil. The outer ring is zero.
#[allow(clippy::too_many_arguments)]
pub(crate) fn apply_s(n1: usize, n2: usize, h: f64, hy: f64, ax: &[f64], ay: &[f64], q: &[f64], u: &[C64], out: &mut [C64]) {
    let cx = 1.0 / (h * h);
    let cy = 1.0 / (hy * hy);
    out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    for i in 1..n1 - 1 {
        for j in 1..n2 - 1 {
            let s = i * n2 + j;
            let a2 = ax[s] * ax[s] + ay[s] * ay[s];
            let mut acc = C64::new(2.0 * cx + 2.0 * cy + a2 - q[s], 0.0) * u[s];
            acc += C64::new(-cx, (ax[s] + ax[s - n2]) / (2.0 * h)) * u[s - n2];
            acc += C64::new(-cx, -(ax[s] + ax[s + n2]) / (2.0 * h)) * u[s + n2];
            acc += C64::new(-cy, (ay[s] + ay[s - 1]) / (2.0 * hy)) * u[s - 1];
            acc += C64::new(-cy, -(ay[s] + ay[s + 1]) / (2.0 * hy)) * u[s + 1];
            out[s] = -acc;
        }
    }
}

fn is_static(e: &ExtendedPotential) -> bool {
    let same = |f: &crate::field::RealField| {
        let s0 = f.slice(0);
        (1..f.dims()[0]).all(|m| f.slice(m) == s0)
    };
    same(&e.ax) && same(&e.ay) && same(&e.q)
}

/// Everything shared by the packets of one direction.
pub struct GoSetup<'a> {
    pub grid: &'a SpaceTimeGrid,
    pub ext1: &'a ExtendedPotential,
    pub ext2: &'a ExtendedPotential,
    pub params: GOParams,
    pub dir: LatticeDirection,
    pub lattice: RayLattice,
    pub chi: Cutoff,
    is_static: bool,
}

impl<'a> GoSetup<'a> {
    pub fn new(grid: &'a SpaceTimeGrid, ext1: &'a ExtendedPotential, ext2: &'a ExtendedPotential, params: GOParams) -> Result<Self> {
        params.validate_on(grid)?;
        if grid.nx != grid.ny {
            return Err(Error::invalid("geometric optics packets need a square grid (nx = ny)"));
        }
        let nl = ext1.ax.dims()[0];
        if ext1.padded != ext2.padded || nl != ext2.ax.dims()[0] || (nl != 1 && nl != grid.n_levels()) {
            return Err(Error::invalid("extended potentials do not share the padded grid"));
        }
        let dir = LatticeDirection::from_omega(params.omega)?;
        let lattice = RayLattice::new(&ext1.padded, dir)?;
        let pg = &ext1.padded;
        for ix in 0..=grid.nx + 1 {
            for iy in 0..=grid.ny + 1 {
                let (a, b) = pg.from_inner(ix, iy);
                let node = a * pg.n2 + b;
                if lattice.line_of(node).base.is_none() || lattice.neighbours(node).is_none() {
                    return Err(Error::invalid("ray quadrature leaves the padded grid; increase the extension pad"));
                }
            }
        }
        let chi = cutoff_chi(params.delta, grid)?;
        Ok(Self { grid, ext1, ext2, params, dir, lattice, chi, is_static: is_static(ext1) && is_static(ext2) })
    }

    /// Same setup with other `(tau, xi)` on the same direction.
    pub fn with_frequency(&self, tau: f64, xi: [f64; 2]) -> Result<Self> {
        let params = GOParams::new(self.params.sigma, self.params.omega, tau, xi, self.params.delta);
        params.validate_on(self.grid)?;
        Ok(Self {
            grid: self.grid,
            ext1: self.ext1,
            ext2: self.ext2,
            params,
            dir: self.dir,
            lattice: self.lattice.clone(),
            chi: self.chi.clone(),
            is_static: self.is_static,
        })
    }

    pub fn padded(&self) -> &PaddedGrid {
        &self.ext1.padded
    }

    pub fn potentials_static(&self) -> bool {
        self.is_static
    }

    pub(super) fn ext(&self, side: Side) -> &ExtendedPotential {
        match side {
            Side::One(_) => self.ext1,
            Side::Two => self.ext2,
        }
    }

    fn a_dot_omega(&self, e: &ExtendedPotential, m: usize) -> Vec<f64> {
        let o = self.params.omega;
        e.ax.level(m).iter().zip(e.ay.level(m)).map(|(a, b)| a * o[0] + b * o[1]).collect()
    }

    /// Cumulative `int A.omega` along each line and the full-line totals.
    fn plane(&self, e: &ExtendedPotential, m: usize) -> (Vec<f64>, Vec<f64>) {
        let a = self.a_dot_omega(e, m);
        let mut phi = vec![0.0; a.len()];
        self.lattice.cumulative(&a, &mut phi);
        let tot = self.lattice.line_totals(&a);
        (phi, tot)
    }

    /// `beta` without its `e^{-i t tau}` factor.
    fn beta_hat(&self, mode: BetaMode, m: usize) -> Vec<C64> {
        let pg = self.padded();
        let xi = self.params.xi;
        let plane = |p: usize| {
            let (x, y) = (pg.x(p / pg.n2), pg.y(p % pg.n2));
            C64::from_polar(1.0, -(xi[0] * x + xi[1] * y))
        };
        match mode {
            BetaMode::Electric => (0..pg.slice_len()).map(plane).collect(),
            BetaMode::Magnetic => {
                let o = self.params.omega;
                let yv = self.params.y;
                let d: Vec<f64> = (0..pg.slice_len())
                    .map(|p| {
                        let ax = self.ext1.ax.level(m)[p] - self.ext2.ax.level(m)[p];
                        let ay = self.ext1.ay.level(m)[p] - self.ext2.ay.level(m)[p];
                        ax * o[0] + ay * o[1]
                    })
                    .collect();
                // y . grad (A . omega), fourth-order centred (A vanishes near the rim)
                let n2 = pg.n2;
                let d4 = |s: usize, st: usize, h: f64| (8.0 * (d[s + st] - d[s - st]) - (d[s + 2 * st] - d[s - 2 * st])) / (12.0 * h);
                let mut dy = vec![0.0; d.len()];
                for i in 2..pg.n1 - 2 {
                    for j in 2..n2 - 2 {
                        let s = i * n2 + j;
                        dy[s] = yv[0] * d4(s, n2, pg.h) + yv[1] * d4(s, 1, pg.hy);
                    }
                }
                let j_tot = self.lattice.line_totals(&d);
                let jy_tot = self.lattice.line_totals(&dy);
                let yxi = yv[0] * xi[0] + yv[1] * xi[1];
                (0..pg.slice_len())
                    .map(|p| {
                        let l = self.lattice.locate[p].0 as usize;
                        -I * (yxi + jy_tot[l]) * plane(p) * C64::from_polar(1.0, -j_tot[l])
                    })
                    .collect()
            }
        }
    }

    /// `beta` at level `m`, `e^{-i t tau}` included.
    pub fn beta_slice(&self, mode: BetaMode, m: usize) -> Vec<C64> {
        let ph = C64::from_polar(1.0, -self.grid.t(m) * self.params.tau);
        let mut b = self.beta_hat(mode, m);
        b.iter_mut().for_each(|v| *v *= ph);
        b
    }

    /// `A.omega` of `A~_1 - A~_2` at level `m` and its tail integral
    /// `int_0^inf` along each ray.
    pub fn diff_transport(&self, m: usize) -> (Vec<f64>, Vec<f64>) {
        let o = self.params.omega;
        let d: Vec<f64> = (0..self.padded().slice_len())
            .map(|p| {
                (self.ext1.ax.level(m)[p] - self.ext2.ax.level(m)[p]) * o[0]
                    + (self.ext1.ay.level(m)[p] - self.ext2.ay.level(m)[p]) * o[1]
            })
            .collect();
        let mut phi = vec![0.0; d.len()];
        self.lattice.cumulative(&d, &mut phi);
        let tot = self.lattice.line_totals(&d);
        // Euler-Maclaurin end term lifts the cumulative trapezoid to fourth order
        let hr = self.lattice.h_ray;
        let tail = (0..d.len())
            .map(|p| {
                let slope = self.lattice.neighbours(p).map_or(0.0, |(a, b)| (d[b] - d[a]) / (2.0 * hr));
                tot[self.lattice.locate[p].0 as usize] - phi[p] + hr * hr / 12.0 * slope
            })
            .collect();
        (d, tail)
    }

    /// `w` at level `m` without the cutoff factor, together with the
    /// cumulative phase used by `R`.
    fn w_hat(&self, side: Side, m: usize) -> (Vec<C64>, Vec<f64>) {
        let e = self.ext(side);
        let (phi, tot) = self.plane(e, m);
        let pg = self.padded();
        let transport: Vec<C64> = (0..pg.slice_len())
            .map(|p| C64::from_polar(1.0, tot[self.lattice.locate[p].0 as usize] - phi[p]))
            .collect();
        let w = match side {
            Side::One(mode) => self.beta_hat(mode, m).iter().zip(&transport).map(|(b, t)| b * t).collect(),
            Side::Two => transport,
        };
        (w, phi)
    }

    fn s_apply(&self, side: Side, m: usize, u: &[C64]) -> Vec<C64> {
        let e = self.ext(side);
        let pg = self.padded();
        let mut out = vec![C64::new(0.0, 0.0); u.len()];
        apply_s(pg.n1, pg.n2, pg.h, pg.hy, e.ax.level(m), e.ay.level(m), e.q.level(m), u, &mut out);
        out
    }

    /// `R[g] = (i/2) e^{-i Phi} (C[e^{i Phi} g] - C[e^{i Phi} g](base))`.
    fn ray_r(&self, phi: &[f64], g: &[C64]) -> Vec<C64> {
        let f: Vec<C64> = g.iter().zip(phi).map(|(v, p)| v * C64::from_polar(1.0, *p)).collect();
        let mut c = vec![C64::new(0.0, 0.0); f.len()];
        self.lattice.cumulative(&f, &mut c);
        let mut out = vec![C64::new(0.0, 0.0); f.len()];
        for line in &self.lattice.lines {
            let Some(base) = self.lattice.at_base(line, &c) else { continue };
            for &n in &line.nodes {
                out[n] = 0.5 * I * C64::from_polar(1.0, -phi[n]) * (c[n] - base);
            }
        }
        out
    }

    pub(super) fn tau_of(&self, side: Side) -> f64 {
        match side {
            Side::One(_) => self.params.tau,
            Side::Two => 0.0,
        }
    }

    /// Calls `visit(m, view)` for every level in order.
    fn drive(&self, side: Side, mut visit: impl FnMut(usize, &SliceView)) {
        let nt = self.grid.nt;
        if self.is_static {
            let (w, phi) = self.w_hat(side, 0);
            let s = self.s_apply(side, 0, &w);
            let u = self.ray_r(&phi, &w);
            let v = self.ray_r(&phi, &s);
            let st = StaticParts { w, u, v };
            for m in 0..=nt {
                visit(m, &SliceView::Static { chi: self.chi.values[m], chi_dt: self.chi.d1[m], parts: &st });
            }
            return;
        }
        let mut cache: HashMap<usize, (Vec<C64>, Vec<f64>)> = HashMap::new();
        let k = self.grid.k;
        let n = self.padded().slice_len();
        let zero = vec![C64::new(0.0, 0.0); n];
        for m in 0..=nt {
            let (c, dc) = (self.chi.values[m], self.chi.d1[m]);
            if c == 0.0 && dc == 0.0 {
                visit(m, &SliceView::Dynamic { w: &zero, u: &zero, v: &zero });
                continue;
            }
            // (i d_t + S)(chi w^) = i chi' w^ + chi (i D_t + S) w^
            let st = dt_stencil(nt, m);
            for &(j, _) in &st {
                cache.entry(j).or_insert_with(|| self.w_hat(side, j));
            }
            let (wh, phi) = &cache[&m];
            let mut g = self.s_apply(side, m, wh);
            for &(j, cj) in &st {
                if cj != 0.0 {
                    for (gv, wv) in g.iter_mut().zip(&cache[&j].0) {
                        *gv += I * (cj / k) * wv;
                    }
                }
            }
            for (gv, wv) in g.iter_mut().zip(wh) {
                *gv = c * *gv + I * dc * wv;
            }
            let w: Vec<C64> = wh.iter().map(|v| c * v).collect();
            let u = self.ray_r(phi, &w);
            let v = self.ray_r(phi, &g);
            visit(m, &SliceView::Dynamic { w: &w, u: &u, v: &v });
            cache.retain(|&j, _| j + 1 >= m);
        }
    }

    /// `(w^, R[w^], R[S w^])` on the unit-square nodes, slice-major like a
    /// grid slice. Requires time-independent potentials.
    pub fn static_parts_on_square(&self, side: Side) -> Result<[Vec<C64>; 3]> {
        if !self.is_static {
            return Err(Error::invalid("square-restricted static amplitudes need time-independent potentials"));
        }
        let (w, phi) = self.w_hat(side, 0);
        let s = self.s_apply(side, 0, &w);
        let u = self.ray_r(&phi, &w);
        let v = self.ray_r(&phi, &s);
        let g = self.grid;
        let pick = |f: &[C64]| {
            let mut out = Vec::with_capacity((g.nx + 2) * (g.ny + 2));
            for ix in 0..=g.nx + 1 {
                for iy in 0..=g.ny + 1 {
                    out.push(f[self.pidx(ix, iy)]);
                }
            }
            out
        };
        Ok([pick(&w), pick(&u), pick(&v)])
    }

    /// Padded index of unit-square node `(ix, iy)`.
    pub(super) fn pidx(&self, ix: usize, iy: usize) -> usize {
        let (a, b) = self.padded().from_inner(ix, iy);
        a * self.padded().n2 + b
    }
}

struct StaticParts {
    w: Vec<C64>,
    u: Vec<C64>,
    v: Vec<C64>,
}

enum SliceView<'s> {
    Static { chi: f64, chi_dt: f64, parts: &'s StaticParts },
    Dynamic { w: &'s [C64], u: &'s [C64], v: &'s [C64] },
}

impl SliceView<'_> {
    /// `(w, R[w], R[(i D_t + S) w])` at a padded node.
    #[inline]
    fn at(&self, p: usize) -> (C64, C64, C64) {
        match self {
            SliceView::Static { chi, chi_dt, parts } => {
                (*chi * parts.w[p], *chi * parts.u[p], I * *chi_dt * parts.u[p] + *chi * parts.v[p])
            }
            SliceView::Dynamic { w, u, v } => (w[p], u[p], v[p]),
        }
    }
}

/// `beta(t, x)` on the padded space-time lattice, `e^{-i t tau}` included.
pub fn beta_field(setup: &GoSetup, mode: BetaMode) -> Field3<C64> {
    let pg = setup.padded();
    let nl = setup.grid.n_levels();
    let mut out = Field3::zeros([nl, pg.n1, pg.n2]);
    let mut cached: Option<Vec<C64>> = None;
    for m in 0..nl {
        let b = if setup.is_static {
            cached.get_or_insert_with(|| setup.beta_hat(mode, 0)).clone()
        } else {
            setup.beta_hat(mode, m)
        };
        let ph = C64::from_polar(1.0, -setup.grid.t(m) * setup.params.tau);
        for (o, v) in out.slice_mut(m).iter_mut().zip(b) {
            *o = ph * v;
        }
    }
    out
}

/// `u_{j,1}` and `u_{j,2}` restricted to the unit-square grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Amplitudes {
    pub side: usize,
    pub u1: ComplexField,
    pub u2: ComplexField,
}

pub fn build_amplitudes(setup: &GoSetup, side: Side) -> Result<Amplitudes> {
    let g = setup.grid;
    let tau = setup.tau_of(side);
    let mut u1 = ComplexField::zeros(g.dims());
    let mut u2 = ComplexField::zeros(g.dims());
    setup.drive(side, |m, view| {
        let e = C64::from_polar(1.0, -g.t(m) * tau);
        for ix in 0..=g.nx + 1 {
            for iy in 0..=g.ny + 1 {
                let (w, u, v) = view.at(setup.pidx(ix, iy));
                u1.set(m, ix, iy, e * w);
                u2.set(m, ix, iy, e * (tau * u + v));
            }
        }
    });
    let finite = u1.is_finite() && u2.is_finite();
    if !finite {
        return Err(Error::numerical("non-finite geometric optics amplitude"));
    }
    Ok(Amplitudes { side: side.index(), u1, u2 })
}

/// Wall values of `w`, `R[w]` and `R[(i D_t + S) w]` at every level; any
/// `tau` is assembled from them without another pass.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticTraces {
    pub w: BoundarySeries,
    pub u: BoundarySeries,
    pub v: BoundarySeries,
}

impl StaticTraces {
    pub fn compute(setup: &GoSetup, side: Side) -> Result<Self> {
        let g = setup.grid;
        let nodes: Vec<usize> = g.boundary_nodes().iter().map(|n| setup.pidx(n.ix, n.iy)).collect();
        let mut out = Self { w: BoundarySeries::zeros(g), u: BoundarySeries::zeros(g), v: BoundarySeries::zeros(g) };
        setup.drive(side, |m, view| {
            for (b, &p) in nodes.iter().enumerate() {
                let (w, u, v) = view.at(p);
                out.w.level_mut(m)[b] = w;
                out.u.level_mut(m)[b] = u;
                out.v.level_mut(m)[b] = v;
            }
        });
        Ok(out)
    }

    /// Wall trace `phi_sigma e^{-i t tau} (w + (tau U + V) / sigma)`.
    pub fn psi(&self, grid: &SpaceTimeGrid, params: &GOParams, tau: f64) -> BoundarySeries {
        let nodes = grid.boundary_nodes();
        BoundarySeries::from_fn(grid, |m, b| {
            let t = grid.t(m);
            let n = &nodes[b];
            let ph = super::phase(params.sigma, params.omega, t, grid.x(n.ix), grid.y(n.iy)) * C64::from_polar(1.0, -t * tau);
            ph * (self.w.get(m, b) + (tau * self.u.get(m, b) + self.v.get(m, b)) / params.sigma)
        })
    }
}
