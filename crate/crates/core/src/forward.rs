//! Crank-Nicolson solver for `(i d_t + Delta_A + q) u = F` on the unit
//! square with Dirichlet walls.
//!
//! With `i u_t = H u + F`, `H = -Delta_h - i D(A) + |A|^2 - q` where `D` is
//! the real antisymmetric pairing of `A.grad + div(A .)`, one step reads
//! `(I + i k/2 H) u' = (I - i k/2 H) u - i k/2 (H_IB (g' + g) + F' + F)`
//! with `H` frozen at the half step.

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::SpaceTimeGrid;
use crate::potentials::PotentialPair;
use crate::C64;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Values on every wall node (trace nodes then corners, in grid order) at
/// every time level.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySeries {
    pub n_levels: usize,
    pub n_nodes: usize,
    pub data: Vec<C64>,
}

impl BoundarySeries {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        let n_nodes = grid.boundary_nodes().len();
        Self { n_levels: grid.n_levels(), n_nodes, data: vec![C64::new(0.0, 0.0); n_nodes * grid.n_levels()] }
    }

    pub fn from_fn(grid: &SpaceTimeGrid, f: impl Fn(usize, usize) -> C64) -> Self {
        let n_nodes = grid.boundary_nodes().len();
        let mut data = Vec::with_capacity(n_nodes * grid.n_levels());
        for m in 0..grid.n_levels() {
            for b in 0..n_nodes {
                data.push(f(m, b));
            }
        }
        Self { n_levels: grid.n_levels(), n_nodes, data }
    }

    /// Wall values of a full space-time field.
    pub fn from_field(grid: &SpaceTimeGrid, u: &ComplexField) -> Self {
        let nodes = grid.boundary_nodes();
        Self::from_fn(grid, |m, b| u.get(m, nodes[b].ix, nodes[b].iy))
    }

    #[inline]
    pub fn get(&self, m: usize, b: usize) -> C64 {
        self.data[m * self.n_nodes + b]
    }

    pub fn level(&self, m: usize) -> &[C64] {
        &self.data[m * self.n_nodes..(m + 1) * self.n_nodes]
    }

    pub fn level_mut(&mut self, m: usize) -> &mut [C64] {
        let n = self.n_nodes;
        &mut self.data[m * n..(m + 1) * n]
    }
}

/// Discrete Hamiltonian at one instant: the interior block and the
/// coupling of interior rows to wall nodes.
pub struct Hamiltonian {
    pub interior: SparseColMat<usize, C64>,
    /// `(interior row, wall node index, H entry)`.
    pub coupling: Vec<(usize, usize, C64)>,
}

impl Hamiltonian {
    /// `<Hu, v> - <u, Hv>` style check helper: dense copy of the interior
    /// block, for small grids only.
    pub fn to_dense(&self) -> Mat<C64> {
        self.interior.to_dense()
    }
}

/// Linear interpolation of the sampled potentials at time `t`.
fn potential_slice(grid: &SpaceTimeGrid, p: &PotentialPair, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let s = (t / grid.k).clamp(0.0, grid.nt as f64);
    let m0 = (s.floor() as usize).min(grid.nt);
    let m1 = (m0 + 1).min(grid.nt);
    let w = s - m0 as f64;
    let mix = |f: &crate::field::RealField| -> Vec<f64> {
        if p.is_time_independent() || w == 0.0 {
            f.slice(m0).to_vec()
        } else {
            f.slice(m0).iter().zip(f.slice(m1)).map(|(a, b)| (1.0 - w) * a + w * b).collect()
        }
    };
    (mix(&p.ax), mix(&p.ay), mix(&p.q))
}

/// Wall node index of every slice node (`usize::MAX` inside).
pub(crate) fn wall_lookup(grid: &SpaceTimeGrid) -> Vec<usize> {
    let ny2 = grid.ny + 2;
    let mut map = vec![usize::MAX; (grid.nx + 2) * ny2];
    for (b, node) in grid.boundary_nodes().iter().enumerate() {
        map[node.ix * ny2 + node.iy] = b;
    }
    map
}

fn hamiltonian_from_slice(grid: &SpaceTimeGrid, ax: &[f64], ay: &[f64], q: &[f64], wall: &[usize]) -> Result<Hamiltonian> {
    let (nx, ny) = (grid.nx, grid.ny);
    let ny2 = ny + 2;
    let cx = 1.0 / (grid.h * grid.h);
    let cy = 1.0 / (grid.hy * grid.hy);
    let mut trips = Vec::with_capacity(5 * nx * ny);
    let mut coupling = Vec::with_capacity(2 * (nx + ny));
    for ix in 1..=nx {
        for iy in 1..=ny {
            let s = ix * ny2 + iy;
            let p = grid.interior_index(ix, iy);
            let a2 = ax[s] * ax[s] + ay[s] * ay[s];
            trips.push(Triplet::new(p, p, C64::new(2.0 * cx + 2.0 * cy + a2 - q[s], 0.0)));
            // neighbour (slice index, H entry)
            let nbrs = [
                (s - ny2, C64::new(-cx, (ax[s] + ax[s - ny2]) / (2.0 * grid.h))),
                (s + ny2, C64::new(-cx, -(ax[s] + ax[s + ny2]) / (2.0 * grid.h))),
                (s - 1, C64::new(-cy, (ay[s] + ay[s - 1]) / (2.0 * grid.hy))),
                (s + 1, C64::new(-cy, -(ay[s] + ay[s + 1]) / (2.0 * grid.hy))),
            ];
            for (n, v) in nbrs {
                let (jx, jy) = (n / ny2, n % ny2);
                if grid.is_boundary(jx, jy) {
                    coupling.push((p, wall[n], v));
                } else {
                    trips.push(Triplet::new(p, grid.interior_index(jx, jy), v));
                }
            }
        }
    }
    let n = nx * ny;
    let interior = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| Error::numerical(format!("hamiltonian assembly: {e:?}")))?;
    Ok(Hamiltonian { interior, coupling })
}

/// `H(t)` built from the grid-sampled potentials (linear in time between
/// levels).
pub fn assemble_hamiltonian(grid: &SpaceTimeGrid, p: &PotentialPair, t: f64) -> Result<Hamiltonian> {
    if p.dims() != grid.dims() {
        return Err(Error::invalid("potential shape does not match the grid"));
    }
    let (ax, ay, q) = potential_slice(grid, p, t);
    hamiltonian_from_slice(grid, &ax, &ay, &q, &wall_lookup(grid))
}

/// Factorised step operators, rebuilt per step only when the potentials
/// depend on time.
pub struct Stepper<'a> {
    grid: &'a SpaceTimeGrid,
    pot: &'a PotentialPair,
    wall: Vec<usize>,
    kappa: f64,
    symbolic: Option<SymbolicLu<usize>>,
    current: Option<(usize, Hamiltonian, Lu<usize, C64>)>,
}

impl<'a> Stepper<'a> {
    pub fn new(grid: &'a SpaceTimeGrid, pot: &'a PotentialPair) -> Result<Self> {
        if pot.dims() != grid.dims() {
            return Err(Error::invalid("potential shape does not match the grid"));
        }
        Ok(Self { grid, pot, wall: wall_lookup(grid), kappa: 0.5 * grid.k, symbolic: None, current: None })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Operators of the step `m -> m+1`.
    pub fn prepare(&mut self, m: usize) -> Result<(&Hamiltonian, &Lu<usize, C64>)> {
        let fresh = match &self.current {
            Some((cm, _, _)) => !(*cm == m || self.pot.is_time_independent()),
            None => true,
        };
        if fresh {
            let t = (m as f64 + 0.5) * self.grid.k;
            let (ax, ay, q) = potential_slice(self.grid, self.pot, t);
            let ham = hamiltonian_from_slice(self.grid, &ax, &ay, &q, &self.wall)?;
            let n = self.grid.n_interior();
            let kap = self.kappa;
            // I + i kappa H shares the pattern of H (full diagonal present)
            let mut trips = Vec::with_capacity(ham.interior.compute_nnz());
            for j in 0..n {
                let col = ham.interior.row_idx_of_col_raw(j);
                let vals = ham.interior.val_of_col(j);
                for (&i, &v) in col.iter().zip(vals) {
                    let mut e = I * kap * v;
                    if i == j {
                        e += C64::new(1.0, 0.0);
                    }
                    trips.push(Triplet::new(i, j, e));
                }
            }
            let plus = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &trips)
                .map_err(|e| Error::numerical(format!("step operator assembly: {e:?}")))?;
            if self.symbolic.is_none() {
                self.symbolic = Some(
                    SymbolicLu::try_new(plus.symbolic())
                        .map_err(|e| Error::numerical(format!("symbolic factorisation: {e:?}")))?,
                );
            }
            let lu = Lu::try_new_with_symbolic(self.symbolic.clone().unwrap(), plus.as_ref())
                .map_err(|e| Error::numerical(format!("step factorisation: {e:?}")))?;
            self.current = Some((m, ham, lu));
        }
        let (_, h, lu) = self.current.as_ref().unwrap();
        Ok((h, lu))
    }
}

/// Interior state of `nrhs` simultaneous solutions, one column each, in
/// interior order.
pub type StateBlock = Mat<C64>;

/// Source samples for a batch: `f(m, interior index, column)`.
pub trait SourceSampler {
    fn add_to(&self, m: usize, col: usize, out: &mut [C64], scale: C64);
}

/// Batched march. `g[c]` is the wall data of column `c`; `source`, when
/// present, adds `F`; `u0` is an optional initial interior state (zero
/// otherwise). `observe(m, state)` sees the interior state at every level.
pub fn march_batch(
    grid: &SpaceTimeGrid,
    pot: &PotentialPair,
    g: &[&BoundarySeries],
    source: Option<&dyn SourceSampler>,
    u0: Option<&StateBlock>,
    mut observe: impl FnMut(usize, &StateBlock) -> Result<()>,
) -> Result<()> {
    let nrhs = g.len();
    let n = grid.n_interior();
    for s in g {
        if s.n_levels != grid.n_levels() || s.n_nodes != grid.boundary_nodes().len() {
            return Err(Error::invalid("boundary data shape does not match the grid"));
        }
    }
    let mut state = match u0 {
        Some(u) => {
            if u.nrows() != n || u.ncols() != nrhs {
                return Err(Error::invalid("initial state shape mismatch"));
            }
            u.clone()
        }
        None => Mat::<C64>::zeros(n, nrhs),
    };
    observe(0, &state)?;
    let mut stepper = Stepper::new(grid, pot)?;
    let kap = stepper.kappa();
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for m in 0..grid.nt {
        let (ham, lu) = stepper.prepare(m)?;
        let hu = &ham.interior * &state;
        let mut rhs = Mat::<C64>::zeros(n, nrhs);
        for c in 0..nrhs {
            for i in 0..n {
                rhs[(i, c)] = state[(i, c)] - I * kap * hu[(i, c)];
            }
            let gc = g[c];
            for &(row, b, v) in &ham.coupling {
                rhs[(row, c)] -= I * kap * v * (gc.get(m + 1, b) + gc.get(m, b));
            }
            if let Some(src) = source {
                buf.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
                src.add_to(m, c, &mut buf, C64::new(1.0, 0.0));
                src.add_to(m + 1, c, &mut buf, C64::new(1.0, 0.0));
                for i in 0..n {
                    rhs[(i, c)] -= I * kap * buf[i];
                }
            }
        }
        let check = if m == 0 { Some(rhs.clone()) } else { None };
        lu.solve_in_place(rhs.as_mut());
        if let Some(b) = check {
            // residual monitor on the first step
            let hx = &ham.interior * &rhs;
            let mut r2 = 0.0;
            let mut b2 = 0.0;
            for c in 0..nrhs {
                for i in 0..n {
                    let ax = rhs[(i, c)] + I * kap * hx[(i, c)];
                    r2 += (ax - b[(i, c)]).norm_sqr();
                    b2 += b[(i, c)].norm_sqr();
                }
            }
            let rel = if b2 > 0.0 { (r2 / b2).sqrt() } else { r2.sqrt() };
            if !(rel <= 1e-10) {
                return Err(Error::numerical(format!("step solve residual {rel:.3e} exceeds 1e-10")));
            }
        }
        state = rhs;
        if !state.col_iter().all(|col| col.iter().all(|v| v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::numerical(format!("non-finite state at level {}", m + 1)));
        }
        observe(m + 1, &state)?;
    }
    Ok(())
}

/// Scatters an interior state column and wall data into a full slice.
pub(crate) fn fill_slice(grid: &SpaceTimeGrid, state: &StateBlock, col: usize, g: Option<&[C64]>, out: &mut [C64]) {
    let ny2 = grid.ny + 2;
    for ix in 1..=grid.nx {
        for iy in 1..=grid.ny {
            out[ix * ny2 + iy] = state[(grid.interior_index(ix, iy), col)];
        }
    }
    for (b, node) in grid.boundary_nodes().iter().enumerate() {
        out[node.ix * ny2 + node.iy] = g.map_or(C64::new(0.0, 0.0), |g| g[b]);
    }
}

fn collect_single(
    grid: &SpaceTimeGrid,
    pot: &PotentialPair,
    g: &BoundarySeries,
    source: Option<&dyn SourceSampler>,
    u0: Option<&StateBlock>,
) -> Result<ComplexField> {
    let mut u = ComplexField::zeros(grid.dims());
    march_batch(grid, pot, &[g], source, u0, |m, st| {
        fill_slice(grid, st, 0, Some(g.level(m)), u.slice_mut(m));
        Ok(())
    })?;
    Ok(u)
}

/// Checks `g(0) = d_t g(0) = 0` within `1e-10`, the compatibility needed
/// with the zero initial state. The one-sided derivative is allowed its
/// own truncation error `k^2 |D^3 g|`.
pub fn check_compatible(grid: &SpaceTimeGrid, g: &BoundarySeries) -> Result<()> {
    let k = grid.k;
    for b in 0..g.n_nodes {
        let v: Vec<C64> = (0..4).map(|m| g.get(m, b)).collect();
        let d1 = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * k);
        let d3 = (v[3] - 3.0 * v[2] + 3.0 * v[1] - v[0]) / (k * k * k);
        if v[0].norm() > 1e-10 || d1.norm() > 1e-10 + k * k * d3.norm() {
            return Err(Error::invalid(format!(
                "boundary data not compatible at t = 0 (g = {:.3e}, d_t g = {:.3e})",
                v[0].norm(),
                d1.norm()
            )));
        }
    }
    Ok(())
}

/// Solves `(i d_t + Delta_A + q) u = 0`, `u(0) = 0`, `u = g` on the walls.
pub fn solve_ibvp(grid: &SpaceTimeGrid, pot: &PotentialPair, g: &BoundarySeries) -> Result<ComplexField> {
    check_compatible(grid, g)?;
    collect_single(grid, pot, g, None, None)
}

/// Homogeneous walls, no source, given initial interior state. Used to
/// probe unitarity.
pub fn solve_homogeneous_from(grid: &SpaceTimeGrid, pot: &PotentialPair, u0: &ComplexField) -> Result<ComplexField> {
    let mut st = Mat::<C64>::zeros(grid.n_interior(), 1);
    for ix in 1..=grid.nx {
        for iy in 1..=grid.ny {
            st[(grid.interior_index(ix, iy), 0)] = u0.get(0, ix, iy);
        }
    }
    collect_single(grid, pot, &BoundarySeries::zeros(grid), None, Some(&st))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VanishingEnd {
    Initial,
    Final,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceTerm {
    pub f: ComplexField,
    pub vanishing_end: VanishingEnd,
}

impl SourceTerm {
    pub fn new(grid: &SpaceTimeGrid, f: ComplexField, vanishing_end: VanishingEnd) -> Result<Self> {
        if f.dims() != grid.dims() {
            return Err(Error::invalid("source shape does not match the grid"));
        }
        let m = match vanishing_end {
            VanishingEnd::Initial => 0,
            VanishingEnd::Final => grid.nt,
        };
        let worst = f.slice(m).iter().fold(0.0f64, |a, v| a.max(v.norm()));
        if worst > 1e-12 {
            return Err(Error::invalid(format!("source does not vanish at the asserted end ({worst:.3e})")));
        }
        Ok(Self { f, vanishing_end })
    }
}

struct FieldSource<'a> {
    grid: &'a SpaceTimeGrid,
    f: &'a ComplexField,
}

impl SourceSampler for FieldSource<'_> {
    fn add_to(&self, m: usize, _col: usize, out: &mut [C64], scale: C64) {
        let sl = self.f.slice(m);
        let ny2 = self.grid.ny + 2;
        for ix in 1..=self.grid.nx {
            for iy in 1..=self.grid.ny {
                out[self.grid.interior_index(ix, iy)] += scale * sl[ix * ny2 + iy];
            }
        }
    }
}

/// Solves `(i d_t + Delta_A + q) v = F` with zero walls and `v = 0` at the
/// end where `F` vanishes. The final-value case goes through the
/// conjugate time reversal `v(t) = conj(w(T - t))`.
pub fn solve_source(grid: &SpaceTimeGrid, pot: &PotentialPair, src: &SourceTerm) -> Result<ComplexField> {
    let zero = BoundarySeries::zeros(grid);
    match src.vanishing_end {
        VanishingEnd::Initial => {
            let s = FieldSource { grid, f: &src.f };
            collect_single(grid, pot, &zero, Some(&s), None)
        }
        VanishingEnd::Final => {
            let nt = grid.nt;
            let rev = pot.time_reversed();
            let d = grid.dims();
            let f = ComplexField::from_fn(d, |m, i, j| src.f.get(nt - m, i, j).conj());
            let s = FieldSource { grid, f: &f };
            let w = collect_single(grid, &rev, &zero, Some(&s), None)?;
            Ok(ComplexField::from_fn(d, |m, i, j| w.get(nt - m, i, j).conj()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EnergyReport {
    pub mass_drift: f64,
    pub bound_ratio: f64,
}

/// Mass drift of `u` and the ratio `max_t |u(t)| / |F|_{l2(Q)}`; the ratio
/// is 0 when no source is given or the source is zero.
pub fn energy_report(grid: &SpaceTimeGrid, u: &ComplexField, f: Option<&SourceTerm>) -> EnergyReport {
    let n0 = grid.slice_norm_c(u.slice(0));
    let mut drift: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for m in 0..grid.n_levels() {
        let nm = grid.slice_norm_c(u.slice(m));
        drift = drift.max((nm - n0).abs());
        sup = sup.max(nm);
    }
    let bound_ratio = match f {
        Some(s) => {
            let fnorm = grid.l2_norm_c(&s.f);
            if fnorm > 0.0 {
                sup / fnorm
            } else {
                0.0
            }
        }
        None => 0.0,
    };
    EnergyReport { mass_drift: drift, bound_ratio }
}

/// Manufactured `u = t^2 sin(pi x) sin(pi y) e^{it}` under divergence-free
/// `A = (a sin(pi y), b sin(pi x))` and `q = c cos(pi x) cos(pi y)`.
pub fn manufactured_error(n: usize, nt: usize) -> Result<f64> {
    let g = SpaceTimeGrid::new(n, n, nt, 1.0)?;
    let (a, b, c) = (0.7, -0.4, 1.3);
    let d = g.dims();
    let ax = crate::field::RealField::from_fn(d, |_, _, j| a * (std::f64::consts::PI * g.y(j)).sin());
    let ay = crate::field::RealField::from_fn(d, |_, i, _| b * (std::f64::consts::PI * g.x(i)).sin());
    let q = crate::field::RealField::from_fn(d, |_, i, j| c * (std::f64::consts::PI * g.x(i)).cos() * (std::f64::consts::PI * g.y(j)).cos());
    let pot = PotentialPair::from_fields(&g, ax, ay, q)?;
    let exact = |t: f64, x: f64, y: f64| C64::from_polar(t * t, t) * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
    let f = ComplexField::from_fn(d, |m, i, j| {
        let (t, x, y) = (g.t(m), g.x(i), g.y(j));
        let (sx, cx, sy, cy) = ((std::f64::consts::PI * x).sin(), (std::f64::consts::PI * x).cos(), (std::f64::consts::PI * y).sin(), (std::f64::consts::PI * y).cos());
        let e = C64::from_polar(1.0, t);
        let u = e * t * t * sx * sy;
        let ut = e * (2.0 * t + I * t * t) * sx * sy;
        let lap = -2.0 * std::f64::consts::PI * std::f64::consts::PI * u;
        let ux = e * t * t * std::f64::consts::PI * cx * sy;
        let uy = e * t * t * std::f64::consts::PI * sx * cy;
        let (a1, a2) = (a * sy, b * sx);
        let qv = c * cx * cy;
        I * ut + lap + 2.0 * I * (a1 * ux + a2 * uy) - (a1 * a1 + a2 * a2) * u + qv * u
    });
    let src = SourceTerm::new(&g, f, VanishingEnd::Initial).unwrap();
    let v = solve_source(&g, &pot, &src).unwrap();
    let err = ComplexField::from_fn(d, |m, i, j| v.get(m, i, j) - exact(g.t(m), g.x(i), g.y(j)));
    Ok(g.l2_norm_c(&err))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{PotentialSpec, ScalarProfile, TimeProfile, VectorProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn smooth_pot(grid: &SpaceTimeGrid, time: bool) -> PotentialPair {
        let tp = if time { TimeProfile::Sine { freq: 1.0, depth: 0.3, phase: 0.2 } } else { TimeProfile::Constant };
        PotentialPair::sample(
            grid,
            &PotentialSpec {
                a: VectorProfile::Components {
                    x: ScalarProfile::Gaussian { center: [0.4, 0.6], width: 0.3, amp: 0.8, time: tp.clone() },
                    y: ScalarProfile::Trig { m: 1, n: 2, amp: -0.5, time: TimeProfile::Constant },
                },
                q: ScalarProfile::Gaussian { center: [0.6, 0.4], width: 0.25, amp: 0.7, time: tp },
            },
        )
    }

    #[test]
    fn free_hamiltonian_ground_state() {
        let g = SpaceTimeGrid::new(31, 31, 8, 1.0).unwrap();
        let h = assemble_hamiltonian(&g, &PotentialPair::zeros(&g), 0.0).unwrap();
        let d = h.to_dense();
        let ev = d.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let lo = ev.iter().fold(f64::INFINITY, |a, &v| a.min(v));
        // dense eigensolve oracle vs the closed form 8 sin^2(pi h/2)/h^2
        let exact = 8.0 * (PI * g.h / 2.0).sin().powi(2) / (g.h * g.h);
        assert!((lo - exact).abs() < 1e-9, "{lo} vs {exact}");
        assert!((lo - 2.0 * PI * PI).abs() < 0.02 * 2.0 * PI * PI);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let g = SpaceTimeGrid::new(15, 15, 8, 1.0).unwrap();
        let p = smooth_pot(&g, true);
        let h = assemble_hamiltonian(&g, &p, 0.37).unwrap();
        let n = g.n_interior();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let u = Mat::<C64>::from_fn(n, 1, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let v = Mat::<C64>::from_fn(n, 1, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let hu = &h.interior * &u;
            let hv = &h.interior * &v;
            let mut a = C64::new(0.0, 0.0);
            let mut b = C64::new(0.0, 0.0);
            for i in 0..n {
                a += hu[(i, 0)] * v[(i, 0)].conj();
                b += u[(i, 0)] * hv[(i, 0)].conj();
            }
            worst = worst.max((a - b).norm() / a.norm().max(1.0));
        }
        assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn constant_q_shifts_diagonal() {
        let g = SpaceTimeGrid::new(9, 9, 8, 1.0).unwrap();
        let p0 = PotentialPair::zeros(&g);
        let pc = PotentialPair::sample(&g, &PotentialSpec { q: ScalarProfile::Constant { value: 2.5 }, ..Default::default() });
        let d0 = assemble_hamiltonian(&g, &p0, 0.0).unwrap().to_dense();
        let dc = assemble_hamiltonian(&g, &pc, 0.0).unwrap().to_dense();
        for i in 0..g.n_interior() {
            for j in 0..g.n_interior() {
                let want = if i == j { d0[(i, j)] - C64::new(2.5, 0.0) } else { d0[(i, j)] };
                assert_eq!(dc[(i, j)], want);
            }
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = SpaceTimeGrid::new(9, 9, 8, 1.0).unwrap();
        let u = solve_ibvp(&g, &smooth_pot(&g, true), &BoundarySeries::zeros(&g)).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn incompatible_data_rejected() {
        let g = SpaceTimeGrid::new(9, 9, 8, 1.0).unwrap();
        let bad = BoundarySeries::from_fn(&g, |m, _| C64::new(g.t(m), 0.0));
        assert!(solve_ibvp(&g, &PotentialPair::zeros(&g), &bad).is_err());
    }

    #[test]
    fn manufactured_solution_second_order() {
        let e1 = manufactured_error(15, 16).unwrap();
        let e2 = manufactured_error(31, 32).unwrap();
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "{e1} {e2} {order}");
    }

    #[test]
    fn unitary_without_source() {
        let g = SpaceTimeGrid::new(15, 15, 64, 1.0).unwrap();
        let p = smooth_pot(&g, true);
        let u0 = ComplexField::from_fn(g.dims(), |_, i, j| {
            if g.is_boundary(i, j) { C64::new(0.0, 0.0) } else { C64::new((3.0 * g.x(i)).sin(), g.y(j) * g.x(i)) }
        });
        let u = solve_homogeneous_from(&g, &p, &u0).unwrap();
        let r = energy_report(&g, &u, None);
        assert!(r.mass_drift <= 1e-10, "{}", r.mass_drift);
    }

    #[test]
    fn backward_is_reflected_conjugate_of_forward() {
        let g = SpaceTimeGrid::new(15, 15, 32, 1.0).unwrap();
        let d = g.dims();
        // q(t) = q(T - t), A = 0
        let q = crate::field::RealField::from_fn(d, |m, i, j| {
            let t = g.t(m);
            (t * (1.0 - t)) * 4.0 * (PI * g.x(i)).cos() * g.y(j)
        });
        let pot = PotentialPair::from_fields(&g, crate::field::RealField::zeros(d), crate::field::RealField::zeros(d), q).unwrap();
        // F real, F(t) = F(T - t), vanishing at both ends
        let f = ComplexField::from_fn(d, |m, i, j| {
            let t = g.t(m);
            C64::new((PI * t).sin().powi(2) * (2.0 * PI * g.x(i)).sin() * (PI * g.y(j)).sin(), 0.0)
        });
        let fwd = solve_source(&g, &pot, &SourceTerm::new(&g, f.clone(), VanishingEnd::Initial).unwrap()).unwrap();
        let bwd = solve_source(&g, &pot, &SourceTerm::new(&g, f, VanishingEnd::Final).unwrap()).unwrap();
        let nt = g.nt;
        let mut worst: f64 = 0.0;
        for m in 0..=nt {
            for p in 0..fwd.slice_len() {
                worst = worst.max((bwd.slice(m)[p] - fwd.slice(nt - m)[p].conj()).norm());
            }
        }
        assert!(worst <= 1e-12 * fwd.max_abs().max(1.0), "{worst}");
        assert_eq!(bwd.slice(nt).iter().fold(0.0f64, |a, v| a.max(v.norm())), 0.0);
    }

    #[test]
    fn bound_ratio_monte_carlo() {
        let g = SpaceTimeGrid::new(11, 11, 16, 1.0).unwrap();
        let d = g.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for draw in 0..20 {
            let pot = PotentialPair::sample(
                &g,
                &PotentialSpec {
                    a: VectorProfile::Uniform { value: [rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)] },
                    q: ScalarProfile::random_trig(draw, 2, 1.0),
                },
            );
            let amp: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = ComplexField::from_fn(d, |m, i, j| {
                let t = g.t(m);
                let (x, y) = (g.x(i), g.y(j));
                C64::new(amp[0] * t * (PI * x).sin(), amp[1] * t * t * (2.0 * PI * y).cos()) * (amp[2] + amp[3] * x * y)
            });
            let src = SourceTerm::new(&g, f, VanishingEnd::Initial).unwrap();
            let v = solve_source(&g, &pot, &src).unwrap();
            let r = energy_report(&g, &v, Some(&src));
            assert!(r.bound_ratio.is_finite());
            worst = worst.max(r.bound_ratio);
        }
        // energy estimate: sup_t |v(t)| <= int_0^T |F(s)| ds <= sqrt(T) |F|_{L2(Q)}
        assert!(worst <= 1.05, "{worst}");
    }

    #[test]
    fn linear_in_data() {
        let g = SpaceTimeGrid::new(9, 9, 16, 1.0).unwrap();
        let p = smooth_pot(&g, false);
        let env = |m: usize| {
            let t = g.t(m);
            t * t * (3.0 * t).sin()
        };
        let g1 = BoundarySeries::from_fn(&g, |m, b| C64::new(env(m) * (b as f64 * 0.3).sin(), 0.0));
        let g2 = BoundarySeries::from_fn(&g, |m, b| C64::new(0.0, env(m) * (b as f64 * 0.17).cos()));
        let g12 = BoundarySeries { data: g1.data.iter().zip(&g2.data).map(|(a, b)| a + b).collect(), ..g1.clone() };
        let u1 = solve_ibvp(&g, &p, &g1).unwrap();
        let u2 = solve_ibvp(&g, &p, &g2).unwrap();
        let u12 = solve_ibvp(&g, &p, &g12).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..u1.data().len() {
            worst = worst.max((u12.data()[i] - u1.data()[i] - u2.data()[i]).norm());
        }
        assert!(worst < 1e-12 * u12.max_abs(), "{worst}");
    }
}
