//! Frequency lattice of the padded space-time grid, Fourier coefficients of
//! `chi^2 f`, the key integral and trigonometric synthesis.

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::go::{BetaMode, Cutoff, GoSetup};
use crate::grid::SpaceTimeGrid;
use crate::potentials::PaddedGrid;
use crate::C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `(2 pi)^{-(n+1)/2}` for `n = 2`.
pub(crate) fn ft_norm() -> f64 {
    (2.0 * PI).powf(-1.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub l: i64,
    pub m: [i64; 2],
}

/// Frequencies `tau = 2 pi l / T`, `xi = 2 pi m / L` of the padded grid,
/// periodic over levels `0..nt` in time and over the padded box in space.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyLattice {
    pub nt: usize,
    pub n1: usize,
    pub n2: usize,
    pub k: f64,
    pub h: f64,
    pub hy: f64,
    pub t_final: f64,
    pub origin: [f64; 2],
    pub periods: [f64; 2],
}

fn signed(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn unsigned(s: i64, n: usize) -> usize {
    s.rem_euclid(n as i64) as usize
}

impl FrequencyLattice {
    pub fn new(grid: &SpaceTimeGrid, pg: &PaddedGrid) -> Self {
        Self {
            nt: grid.nt,
            n1: pg.n1,
            n2: pg.n2,
            k: grid.k,
            h: pg.h,
            hy: pg.hy,
            t_final: grid.t_final,
            origin: [pg.x(0), pg.y(0)],
            periods: [pg.n1 as f64 * pg.h, pg.n2 as f64 * pg.hy],
        }
    }

    pub fn tau(&self, l: i64) -> f64 {
        2.0 * PI * l as f64 / self.t_final
    }

    pub fn xi(&self, m: [i64; 2]) -> [f64; 2] {
        [2.0 * PI * m[0] as f64 / self.periods[0], 2.0 * PI * m[1] as f64 / self.periods[1]]
    }

    pub fn frequency(&self, p: LatticePoint) -> (f64, [f64; 2]) {
        (self.tau(p.l), self.xi(p.m))
    }

    /// Lattice points below the Nyquist bins satisfying `keep`, in a fixed order.
    pub fn points(&self, mut keep: impl FnMut(f64, [f64; 2]) -> bool) -> Vec<LatticePoint> {
        let lt = (self.nt as i64 - 1) / 2;
        let (l1, l2) = ((self.n1 as i64 - 1) / 2, (self.n2 as i64 - 1) / 2);
        let mut out = Vec::new();
        for m1 in -l1..=l1 {
            for m2 in -l2..=l2 {
                for l in -lt..=lt {
                    let p = LatticePoint { l, m: [m1, m2] };
                    let (t, x) = self.frequency(p);
                    if keep(t, x) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Index of a lattice point in an FFT-ordered `[nt, n1, n2]` array.
    pub fn fft_index(&self, p: LatticePoint) -> (usize, usize, usize) {
        (unsigned(p.l, self.nt), unsigned(p.m[0], self.n1), unsigned(p.m[1], self.n2))
    }

    pub fn point_of(&self, m: usize, i: usize, j: usize) -> LatticePoint {
        LatticePoint { l: signed(m, self.nt), m: [signed(i, self.n1), signed(j, self.n2)] }
    }
}

fn slices_equal(f: &RealField) -> bool {
    let s0 = f.slice(0);
    (1..f.dims()[0]).all(|m| f.slice(m) == s0)
}

/// `chi^2 f` on the padded grid.
pub fn chi2_field(chi: &Cutoff, f: &RealField) -> RealField {
    let mut out = f.clone();
    for m in 0..f.dims()[0] {
        let c2 = chi.values[m] * chi.values[m];
        out.slice_mut(m).iter_mut().for_each(|v| *v *= c2);
    }
    out
}

/// `F(chi^2 f)(tau, xi)` by direct summation over the padded grid.
pub fn fourier_coefficient(lat: &FrequencyLattice, chi: &Cutoff, f: &RealField, tau: f64, xi: [f64; 2]) -> C64 {
    let ex: Vec<C64> = (0..lat.n1).map(|i| C64::from_polar(1.0, -xi[0] * (lat.origin[0] + i as f64 * lat.h))).collect();
    let ey: Vec<C64> = (0..lat.n2).map(|j| C64::from_polar(1.0, -xi[1] * (lat.origin[1] + j as f64 * lat.hy))).collect();
    let space = |m: usize| -> C64 {
        let s = f.level(m);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..lat.n1 {
            let row = &s[i * lat.n2..(i + 1) * lat.n2];
            let r: C64 = row.iter().zip(&ey).map(|(v, e)| e * *v).sum();
            acc += ex[i] * r;
        }
        acc
    };
    let time = |m: usize| chi.values[m] * chi.values[m] * C64::from_polar(1.0, -tau * m as f64 * lat.k);
    let total = if slices_equal(f) {
        let s = space(0);
        (0..lat.nt).map(|m| time(m) * s).sum::<C64>()
    } else {
        (0..lat.nt).map(|m| time(m) * space(m)).sum::<C64>()
    };
    total * (ft_norm() * lat.k * lat.h * lat.hy)
}

struct Plans {
    row: Arc<dyn Fft<f64>>,
    col: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n1: usize, n2: usize, inverse: bool) -> Self {
        let mut p = FftPlanner::new();
        if inverse {
            Self { row: p.plan_fft_inverse(n2), col: p.plan_fft_inverse(n1) }
        } else {
            Self { row: p.plan_fft_forward(n2), col: p.plan_fft_forward(n1) }
        }
    }

    /// In-place 2D transform of a row-major `n1 x n2` buffer.
    fn run(&self, buf: &mut [C64], n1: usize, n2: usize) {
        self.row.process(buf);
        let mut col = vec![C64::new(0.0, 0.0); n1];
        for j in 0..n2 {
            for i in 0..n1 {
                col[i] = buf[i * n2 + j];
            }
            self.col.process(&mut col);
            for i in 0..n1 {
                buf[i * n2 + j] = col[i];
            }
        }
    }
}

/// `F(chi^2 f)` on every lattice bin, FFT-ordered `[nt, n1, n2]`.
pub fn spectrum_fft(lat: &FrequencyLattice, chi: &Cutoff, f: &RealField) -> ComplexField {
    let (nt, n1, n2) = (lat.nt, lat.n1, lat.n2);
    let plans = Plans::new(n1, n2, false);
    let mut out = ComplexField::zeros([nt, n1, n2]);
    for m in 0..nt {
        let c2 = chi.values[m] * chi.values[m];
        let buf = out.slice_mut(m);
        for (b, v) in buf.iter_mut().zip(f.level(m)) {
            *b = C64::new(c2 * v, 0.0);
        }
        plans.run(buf, n1, n2);
    }
    let tf = FftPlanner::new().plan_fft_forward(nt);
    let mut line = vec![C64::new(0.0, 0.0); nt];
    let scale = ft_norm() * lat.k * lat.h * lat.hy;
    for s in 0..n1 * n2 {
        for (m, v) in line.iter_mut().enumerate() {
            *v = out.data()[m * n1 * n2 + s];
        }
        tf.process(&mut line);
        let (i, j) = (s / n2, s % n2);
        let xi = lat.xi([signed(i, n1), signed(j, n2)]);
        let shift = C64::from_polar(scale, -(xi[0] * lat.origin[0] + xi[1] * lat.origin[1]));
        for (m, v) in line.iter().enumerate() {
            out.data_mut()[m * n1 * n2 + s] = v * shift;
        }
    }
    out
}

/// Inverse transform of a sparse set of coefficients, restricted to the
/// unit-square grid at every level `0..=nt`.
pub fn synthesize(lat: &FrequencyLattice, grid: &SpaceTimeGrid, pg: &PaddedGrid, coeffs: &[(LatticePoint, C64)]) -> ComplexField {
    let (n1, n2) = (lat.n1, lat.n2);
    let mut bins: BTreeMap<(usize, usize), Vec<(f64, C64)>> = BTreeMap::new();
    for &(p, c) in coeffs {
        if c == C64::new(0.0, 0.0) {
            continue;
        }
        let (_, i, j) = lat.fft_index(p);
        let xi = lat.xi(p.m);
        let shift = C64::from_polar(1.0, xi[0] * lat.origin[0] + xi[1] * lat.origin[1]);
        bins.entry((i, j)).or_default().push((lat.tau(p.l), c * shift));
    }
    let scale = (2.0 * PI).powf(1.5) / (lat.t_final * lat.periods[0] * lat.periods[1]);
    let plans = Plans::new(n1, n2, true);
    let mut out = ComplexField::zeros(grid.dims());
    let mut buf = vec![C64::new(0.0, 0.0); n1 * n2];
    for m in 0..grid.n_levels() {
        if bins.is_empty() {
            break;
        }
        let t = grid.t(m);
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for (&(i, j), list) in &bins {
            buf[i * n2 + j] = list.iter().map(|(tau, c)| c * C64::from_polar(1.0, tau * t)).sum();
        }
        plans.run(&mut buf, n1, n2);
        for ix in 0..=grid.nx + 1 {
            for iy in 0..=grid.ny + 1 {
                let (a, b) = pg.from_inner(ix, iy);
                out.set(m, ix, iy, scale * buf[a * n2 + b]);
            }
        }
    }
    out
}

/// `int chi^2 beta e^{i int_0^inf A.omega} A.omega` over the padded grid,
/// `A = A~_1 - A~_2`, magnetic `beta`.
pub fn key_integral(setup: &GoSetup) -> C64 {
    let g = setup.grid;
    let pg = setup.padded();
    let area = pg.h * pg.hy;
    let chi = &setup.chi;
    let space = |m: usize, with_time: bool| -> C64 {
        let (d, tail) = setup.diff_transport(m);
        if d.iter().all(|v| *v == 0.0) {
            return C64::new(0.0, 0.0);
        }
        let b = setup.beta_slice(BetaMode::Magnetic, if with_time { m } else { 0 });
        let s: C64 = (0..d.len()).filter(|&p| d[p] != 0.0).map(|p| b[p] * C64::from_polar(d[p], tail[p])).sum();
        s * area
    };
    if setup.potentials_static() {
        // beta_slice(0) carries no time phase since t_0 = 0
        let s = space(0, false);
        (0..g.n_levels())
            .map(|m| g.time_weight(m) * chi.values[m] * chi.values[m] * C64::from_polar(1.0, -g.t(m) * setup.params.tau))
            .sum::<C64>()
            * s
    } else {
        (0..g.n_levels()).filter(|&m| chi.values[m] != 0.0).map(|m| g.time_weight(m) * chi.values[m] * chi.values[m] * space(m, true)).sum()
    }
}

/// Relative gap between `i K` and `(2 pi)^{3/2} |xi| F(chi^2 A)(tau, xi).omega`.
///
/// Integrating `y.grad(e^{-i xi.x} e^{-iJ}) (1 - e^{iJ})` by parts leaves
/// `+i int e^{-i xi.x} y.grad J`, which fixes the sign of the identity.
pub fn fourier_identity_check(setup: &GoSetup) -> Result<f64> {
    fourier_identity_gap(setup, 1.0)
}

/// Same gap against `sign (2 pi)^{3/2} |xi| F(chi^2 A).omega`.
pub fn fourier_identity_gap(setup: &GoSetup, sign: f64) -> Result<f64> {
    let p = &setup.params;
    let nxi = (p.xi[0] * p.xi[0] + p.xi[1] * p.xi[1]).sqrt();
    if nxi == 0.0 {
        return Err(Error::invalid("the Fourier identity carries no information at xi = 0"));
    }
    let lhs = I * key_integral(setup);
    let rhs = sign * (2.0 * PI).powf(1.5) * nxi * a_dot_omega_coefficient(setup);
    let scale = rhs.norm();
    if scale == 0.0 {
        return Ok(lhs.norm());
    }
    Ok((lhs - rhs).norm() / scale)
}

/// `F(chi^2 (A~_1 - A~_2))(tau, xi).omega`.
pub(crate) fn a_dot_omega_coefficient(setup: &GoSetup) -> C64 {
    let lat = FrequencyLattice::new(setup.grid, setup.padded());
    let d = setup.ext1.sub(setup.ext2);
    let p = &setup.params;
    fourier_coefficient(&lat, &setup.chi, &d.ax, p.tau, p.xi) * p.omega[0]
        + fourier_coefficient(&lat, &setup.chi, &d.ay, p.tau, p.xi) * p.omega[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::go::{cutoff_chi, GOParams, LatticeDirection};
    use crate::potentials::{extend_pair, PotentialPair, PotentialSpec, ScalarProfile, TimeProfile, VectorProfile};

    fn curl_pair(g: &SpaceTimeGrid, time: TimeProfile) -> PotentialPair {
        PotentialPair::sample(
            g,
            &PotentialSpec {
                a: VectorProfile::Curl {
                    stream: ScalarProfile::Poly { center: [0.5, 0.45], radius: 0.35, order: 8, amp: 0.1, time },
                },
                q: ScalarProfile::Zero,
            },
        )
    }

    #[test]
    fn fft_matches_direct_sum_and_round_trips() {
        let g = SpaceTimeGrid::new(15, 15, 16, 1.0).unwrap();
        let p = curl_pair(&g, TimeProfile::Sine { freq: 1.0, depth: 0.5, phase: 0.3 });
        let (e1, _) = extend_pair(&g, &p, &p, 0.1).unwrap();
        let chi = cutoff_chi(0.2, &g).unwrap();
        let lat = FrequencyLattice::new(&g, &e1.padded);
        let s = spectrum_fft(&lat, &chi, &e1.ax);
        for (m, i, j) in [(0usize, 0usize, 0usize), (1, 2, 3), (15, 5, 7), (3, 20, 1)] {
            let pt = lat.point_of(m, i, j);
            let (t, x) = lat.frequency(pt);
            let d = fourier_coefficient(&lat, &chi, &e1.ax, t, x);
            assert!((d - s.get(m, i, j)).norm() < 1e-12 * (1.0 + d.norm()), "{pt:?}");
        }
        // full synthesis reproduces chi^2 A on the square
        let coeffs: Vec<_> = (0..lat.nt)
            .flat_map(|m| (0..lat.n1).flat_map(move |i| (0..lat.n2).map(move |j| (m, i, j))))
            .map(|(m, i, j)| (lat.point_of(m, i, j), s.get(m, i, j)))
            .collect();
        let back = synthesize(&lat, &g, &e1.padded, &coeffs);
        let want = chi2_field(&chi, &p.ax);
        for m in 0..g.nt {
            for i in 0..=g.nx + 1 {
                for j in 0..=g.ny + 1 {
                    assert!((back.get(m, i, j) - want.get(m, i, j)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn key_integral_trivial_cases() {
        let g = SpaceTimeGrid::new(31, 31, 32, 1.0).unwrap();
        let z = PotentialPair::zeros(&g);
        let (e1, e2) = extend_pair(&g, &z, &z, 0.1).unwrap();
        let params = GOParams::new(3.0, [1.0, 0.0], 1.0, [0.0, 6.0], 0.2);
        let s = GoSetup::new(&g, &e1, &e2, params.clone()).unwrap();
        assert_eq!(key_integral(&s), C64::new(0.0, 0.0));
        // A = (0, a(x, y)) has A.omega = 0 for omega = e_1
        let a = PotentialPair::sample(
            &g,
            &PotentialSpec {
                a: VectorProfile::Components {
                    x: ScalarProfile::Zero,
                    y: ScalarProfile::Poly { center: [0.5, 0.5], radius: 0.3, order: 4, amp: 0.2, time: TimeProfile::Constant },
                },
                q: ScalarProfile::Zero,
            },
        );
        let (e1, e2) = extend_pair(&g, &a, &z, 0.1).unwrap();
        let s = GoSetup::new(&g, &e1, &e2, params).unwrap();
        assert_eq!(key_integral(&s), C64::new(0.0, 0.0));
    }

    #[test]
    fn identity_holds_and_refines() {
        let dir = LatticeDirection::new(1, 1).unwrap();
        let om = dir.omega();
        let xi = [-om[1] * 9.0, om[0] * 9.0];
        let mut errs = Vec::new();
        for n in [31usize, 63] {
            let g = SpaceTimeGrid::new(n, n, 32, 1.0).unwrap();
            let p = curl_pair(&g, TimeProfile::Constant);
            let (e1, e2) = extend_pair(&g, &p, &PotentialPair::zeros(&g), 0.1).unwrap();
            let s = GoSetup::new(&g, &e1, &e2, GOParams::new(3.0, om, 2.0, xi, 0.2)).unwrap();
            errs.push(fourier_identity_check(&s).unwrap());
        }
        assert!(errs[1] < 1e-3, "{errs:?}");
        assert!((errs[0] / errs[1]).log2() >= 1.9, "{errs:?}");
    }

    #[test]
    fn identity_rejects_zero_xi() {
        let g = SpaceTimeGrid::new(15, 15, 16, 1.0).unwrap();
        let z = PotentialPair::zeros(&g);
        let (e1, e2) = extend_pair(&g, &z, &z, 0.1).unwrap();
        let s = GoSetup::new(&g, &e1, &e2, GOParams::new(2.0, [1.0, 0.0], 0.0, [0.0, 0.0], 0.2)).unwrap();
        assert!(fourier_identity_check(&s).is_err());
    }
}
