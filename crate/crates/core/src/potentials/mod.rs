//! Electromagnetic potentials, gauge maps, admissibility and extension.

mod extend;
pub mod families;

pub use extend::{extend_pair, extend_potential, ExtendedPotential, PaddedGrid};
pub use families::{PotentialSpec, ScalarProfile, TimeProfile, VectorProfile};

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::grid::SpaceTimeGrid;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use faer::linalg::solvers::Solve;

/// Magnetic potential `A = (ax, ay)` and electric potential `q` sampled at
/// every node of a space-time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialPair {
    pub ax: RealField,
    pub ay: RealField,
    pub q: RealField,
    time_independent: bool,
}

impl PotentialPair {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        let d = grid.dims();
        Self { ax: RealField::zeros(d), ay: RealField::zeros(d), q: RealField::zeros(d), time_independent: true }
    }

    pub fn from_fields(grid: &SpaceTimeGrid, ax: RealField, ay: RealField, q: RealField) -> Result<Self> {
        let d = grid.dims();
        if ax.dims() != d || ay.dims() != d || q.dims() != d {
            return Err(Error::invalid("potential shapes do not match the grid"));
        }
        if !(ax.is_finite() && ay.is_finite() && q.is_finite()) {
            return Err(Error::invalid("potential samples must be finite"));
        }
        let mut p = Self { ax, ay, q, time_independent: false };
        p.time_independent = p.slices_identical();
        Ok(p)
    }

    pub fn sample(grid: &SpaceTimeGrid, spec: &PotentialSpec) -> Self {
        Self::sample_with(grid, spec, |t, x, y| spec.a.eval(t, x, y))
    }

    /// Like [`PotentialPair::sample`], but curl profiles are sampled as the
    /// centred-difference curl of their stream function, so the centred
    /// divergence of `A` vanishes to roundoff.
    pub fn sample_discrete_curl(grid: &SpaceTimeGrid, spec: &PotentialSpec) -> Self {
        Self::sample_with(grid, spec, |t, x, y| spec.a.eval_discrete(t, x, y, grid.h, grid.hy))
    }

    fn sample_with(grid: &SpaceTimeGrid, spec: &PotentialSpec, a_of: impl Fn(f64, f64, f64) -> [f64; 2]) -> Self {
        let d = grid.dims();
        let mut ax = RealField::zeros(d);
        let mut ay = RealField::zeros(d);
        let mut q = RealField::zeros(d);
        let independent = spec.is_time_independent();
        for m in 0..d[0] {
            let t = if independent { 0.0 } else { grid.t(m) };
            for i in 0..d[1] {
                for j in 0..d[2] {
                    let (x, y) = (grid.x(i), grid.y(j));
                    let a = a_of(t, x, y);
                    ax.set(m, i, j, a[0]);
                    ay.set(m, i, j, a[1]);
                    q.set(m, i, j, spec.q.eval(t, x, y));
                }
            }
        }
        Self { ax, ay, q, time_independent: independent }
    }

    fn slices_identical(&self) -> bool {
        let n = self.ax.dims()[0];
        (1..n).all(|m| {
            self.ax.slice(m) == self.ax.slice(0)
                && self.ay.slice(m) == self.ay.slice(0)
                && self.q.slice(m) == self.q.slice(0)
        })
    }

    /// True when every time slice is bitwise identical, so one operator
    /// factorisation serves the whole march.
    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn dims(&self) -> [usize; 3] {
        self.q.dims()
    }

    /// `max |A|` with `|.|` the Euclidean vector norm.
    pub fn a_sup(&self) -> f64 {
        self.ax.data().iter().zip(self.ay.data()).fold(0.0, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    pub fn q_sup(&self) -> f64 {
        self.q.max_abs()
    }

    /// Coercivity shift of the sesquilinear form: `1/2 + |q|^2 + 2|A|^2`.
    pub fn ellipticity_lambda(&self) -> f64 {
        0.5 + self.q_sup().powi(2) + 2.0 * self.a_sup().powi(2)
    }

    pub fn add(&self, other: &PotentialPair) -> PotentialPair {
        PotentialPair {
            ax: self.ax.zip_map(&other.ax, |a, b| a + b),
            ay: self.ay.zip_map(&other.ay, |a, b| a + b),
            q: self.q.zip_map(&other.q, |a, b| a + b),
            time_independent: self.time_independent && other.time_independent,
        }
    }

    pub fn sub(&self, other: &PotentialPair) -> PotentialPair {
        PotentialPair {
            ax: self.ax.zip_map(&other.ax, |a, b| a - b),
            ay: self.ay.zip_map(&other.ay, |a, b| a - b),
            q: self.q.zip_map(&other.q, |a, b| a - b),
            time_independent: self.time_independent && other.time_independent,
        }
    }

    /// Time reversal used by the final-value solver: `(-A(T-t), q(T-t))`.
    pub fn time_reversed(&self) -> PotentialPair {
        let d = self.dims();
        let nt = d[0] - 1;
        let rev = |f: &RealField, s: f64| RealField::from_fn(d, |m, i, j| s * f.get(nt - m, i, j));
        PotentialPair {
            ax: rev(&self.ax, -1.0),
            ay: rev(&self.ay, -1.0),
            q: rev(&self.q, 1.0),
            time_independent: self.time_independent,
        }
    }
}

/// Real gauge generator; zero on every wall node at every time level.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeFunction {
    pub phi: RealField,
}

impl GaugeFunction {
    pub fn new(grid: &SpaceTimeGrid, phi: RealField) -> Result<Self> {
        if phi.dims() != grid.dims() {
            return Err(Error::invalid("gauge shape does not match the grid"));
        }
        let g = Self { phi };
        let wall = g.wall_max(grid);
        if wall > 1e-12 {
            return Err(Error::invalid(format!("gauge function is {wall:.3e} on the boundary")));
        }
        Ok(g)
    }

    pub fn sample(grid: &SpaceTimeGrid, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let phi = RealField::from_fn(grid.dims(), |m, i, j| {
            if grid.is_boundary(i, j) {
                0.0
            } else {
                f(grid.t(m), grid.x(i), grid.y(j))
            }
        });
        Self::new(grid, phi)
    }

    fn wall_max(&self, grid: &SpaceTimeGrid) -> f64 {
        let mut w: f64 = 0.0;
        for m in 0..grid.n_levels() {
            for b in grid.boundary_nodes() {
                w = w.max(self.phi.get(m, b.ix, b.iy).abs());
            }
        }
        w
    }

    pub fn negated(&self) -> Self {
        Self { phi: self.phi.map(|v| -v) }
    }
}

/// Second-order derivative along axis 1 or 2 of one slice, centred inside
/// and one-sided at the first and last index.
pub(crate) fn diff_axis(f: &[f64], n1: usize, n2: usize, axis: usize, step: f64, out: &mut [f64]) {
    let at = |i: usize, j: usize| f[i * n2 + j];
    for i in 0..n1 {
        for j in 0..n2 {
            let (p, n) = if axis == 1 { (i, n1) } else { (j, n2) };
            let g = |o: isize| {
                let q = (p as isize + o) as usize;
                if axis == 1 { at(q, j) } else { at(i, q) }
            };
            out[i * n2 + j] = if p == 0 {
                (-3.0 * g(0) + 4.0 * g(1) - g(2)) / (2.0 * step)
            } else if p == n - 1 {
                (3.0 * g(0) - 4.0 * g(-1) + g(-2)) / (2.0 * step)
            } else {
                (g(1) - g(-1)) / (2.0 * step)
            };
        }
    }
}

/// Time derivative of a field at every level, centred inside, one-sided
/// second order at both ends.
pub(crate) fn diff_time(f: &RealField, k: f64) -> RealField {
    let d = f.dims();
    let nt = d[0] - 1;
    RealField::from_fn(d, |m, i, j| {
        let v = |l: usize| f.get(l, i, j);
        if m == 0 {
            (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * k)
        } else if m == nt {
            (3.0 * v(nt) - 4.0 * v(nt - 1) + v(nt - 2)) / (2.0 * k)
        } else {
            (v(m + 1) - v(m - 1)) / (2.0 * k)
        }
    })
}

/// Spatial gradient of every slice with the wall-aware stencil.
pub(crate) fn grad_field(grid: &SpaceTimeGrid, f: &RealField) -> (RealField, RealField) {
    let d = f.dims();
    let mut gx = RealField::zeros(d);
    let mut gy = RealField::zeros(d);
    for m in 0..d[0] {
        diff_axis(f.slice(m), d[1], d[2], 1, grid.h, gx.slice_mut(m));
        diff_axis(f.slice(m), d[1], d[2], 2, grid.hy, gy.slice_mut(m));
    }
    (gx, gy)
}

/// `(A - grad phi, q + d_t phi)` with the difference stencils above.
pub fn gauge_transform(grid: &SpaceTimeGrid, p: &PotentialPair, phi: &GaugeFunction) -> Result<PotentialPair> {
    if p.dims() != grid.dims() || phi.phi.dims() != grid.dims() {
        return Err(Error::invalid("gauge transform shape mismatch"));
    }
    let wall = phi.wall_max(grid);
    if wall > 1e-12 {
        return Err(Error::invalid(format!("gauge function is {wall:.3e} on the boundary")));
    }
    let (gx, gy) = grad_field(grid, &phi.phi);
    let dt = diff_time(&phi.phi, grid.k);
    PotentialPair::from_fields(
        grid,
        p.ax.zip_map(&gx, |a, g| a - g),
        p.ay.zip_map(&gy, |a, g| a - g),
        p.q.zip_map(&dt, |q, d| q + d),
    )
}

/// Dirichlet Laplacian `-Delta_h` on interior nodes, factored once.
pub(crate) struct PoissonSolver {
    nx: usize,
    ny: usize,
    op: SparseColMat<usize, f64>,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl PoissonSolver {
    pub(crate) fn new(grid: &SpaceTimeGrid) -> Result<Self> {
        let (nx, ny, h, hy) = (grid.nx, grid.ny, grid.h, grid.hy);
        let cx = 1.0 / (h * h);
        let cy = 1.0 / (hy * hy);
        let mut trips = Vec::with_capacity(5 * nx * ny);
        for ix in 1..=nx {
            for iy in 1..=ny {
                let p = grid.interior_index(ix, iy);
                trips.push(Triplet::new(p, p, 2.0 * cx + 2.0 * cy));
                if ix > 1 {
                    trips.push(Triplet::new(p, grid.interior_index(ix - 1, iy), -cx));
                }
                if ix < nx {
                    trips.push(Triplet::new(p, grid.interior_index(ix + 1, iy), -cx));
                }
                if iy > 1 {
                    trips.push(Triplet::new(p, grid.interior_index(ix, iy - 1), -cy));
                }
                if iy < ny {
                    trips.push(Triplet::new(p, grid.interior_index(ix, iy + 1), -cy));
                }
            }
        }
        let op = SparseColMat::<usize, f64>::try_new_from_triplets(nx * ny, nx * ny, &trips)
            .map_err(|e| Error::numerical(format!("poisson assembly: {e:?}")))?;
        let llt = op.sp_cholesky(Side::Lower).map_err(|e| Error::numerical(format!("poisson factorisation: {e:?}")))?;
        Ok(Self { nx, ny, op, llt })
    }

    /// Solves `-Delta_h phi = rhs` on interior nodes with zero walls.
    /// Fails when the relative residual exceeds `1e-10`.
    pub(crate) fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.nx * self.ny;
        let mut b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        self.llt.solve_in_place(b.as_mut());
        let x: Vec<f64> = (0..n).map(|i| b[(i, 0)]).collect();
        let xm = Mat::<f64>::from_fn(n, 1, |i, _| x[i]);
        let ax = &self.op * &xm;
        let mut r2 = 0.0;
        let mut b2 = 0.0;
        for i in 0..n {
            r2 += (ax[(i, 0)] - rhs[i]).powi(2);
            b2 += rhs[i] * rhs[i];
        }
        let rel = if b2 > 0.0 { (r2 / b2).sqrt() } else { r2.sqrt() };
        if !(rel <= 1e-10) {
            return Err(Error::numerical(format!("poisson residual {rel:.3e} exceeds 1e-10")));
        }
        Ok(x)
    }
}

/// Per-slice solve of `-Delta_h phi = div_h (A2 - A1)`, `phi = 0` on walls.
pub fn gauge_from_pair(grid: &SpaceTimeGrid, p1: &PotentialPair, p2: &PotentialPair) -> Result<GaugeFunction> {
    if p1.dims() != grid.dims() || p2.dims() != grid.dims() {
        return Err(Error::invalid("gauge_from_pair shape mismatch"));
    }
    let solver = PoissonSolver::new(grid)?;
    let d = grid.dims();
    let mut phi = RealField::zeros(d);
    let mut rhs = vec![0.0; grid.n_interior()];
    for m in 0..d[0] {
        for ix in 1..=grid.nx {
            for iy in 1..=grid.ny {
                let dax = (p2.ax.get(m, ix + 1, iy) - p1.ax.get(m, ix + 1, iy))
                    - (p2.ax.get(m, ix - 1, iy) - p1.ax.get(m, ix - 1, iy));
                let day = (p2.ay.get(m, ix, iy + 1) - p1.ay.get(m, ix, iy + 1))
                    - (p2.ay.get(m, ix, iy - 1) - p1.ay.get(m, ix, iy - 1));
                rhs[grid.interior_index(ix, iy)] = dax / (2.0 * grid.h) + day / (2.0 * grid.hy);
            }
        }
        if rhs.iter().all(|&v| v == 0.0) {
            continue;
        }
        let x = solver.solve(&rhs)?;
        for ix in 1..=grid.nx {
            for iy in 1..=grid.ny {
                phi.set(m, ix, iy, x[grid.interior_index(ix, iy)]);
            }
        }
    }
    GaugeFunction::new(grid, phi)
}

/// Tolerances for the admissibility verdict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibilityTolerances {
    pub boundary: f64,
    pub divergence: f64,
}

impl AdmissibilityTolerances {
    /// Exact agreement on the collar; divergence gap allowed at the size of
    /// centred-difference error, `50 h^2`.
    pub fn for_grid(grid: &SpaceTimeGrid) -> Self {
        Self { boundary: 1e-12, divergence: 50.0 * grid.h * grid.hy }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct AdmissibilityReport {
    /// `max |A1 - A2|` over the wall collar of width `3h`.
    pub boundary_agreement: f64,
    /// `max |div_h A1 - div_h A2|` over interior nodes.
    pub divergence_gap: f64,
    /// Sum over both potentials of sampled sup norms of values and
    /// differences up to order 2; stands in for the `W^{5,inf}`, `H^6`,
    /// `W^{4,inf}` sum, which is not computable on grid data.
    pub norm_bound: f64,
    pub lambda: [f64; 2],
    pub alpha: f64,
    pub m_bound: f64,
    pub tol_boundary: f64,
    pub tol_divergence: f64,
    pub pass: bool,
}

pub fn check_admissibility(
    grid: &SpaceTimeGrid,
    p1: &PotentialPair,
    p2: &PotentialPair,
    m_bound: f64,
    tol: AdmissibilityTolerances,
) -> AdmissibilityReport {
    let d = grid.dims();
    let collar = 3usize;
    let mut boundary_agreement: f64 = 0.0;
    let mut divergence_gap: f64 = 0.0;
    for m in 0..d[0] {
        for i in 0..d[1] {
            for j in 0..d[2] {
                let near = i <= collar || j <= collar || i + collar >= d[1] - 1 || j + collar >= d[2] - 1;
                if near {
                    let da = (p1.ax.get(m, i, j) - p2.ax.get(m, i, j)).hypot(p1.ay.get(m, i, j) - p2.ay.get(m, i, j));
                    boundary_agreement = boundary_agreement.max(da);
                }
                if !grid.is_boundary(i, j) {
                    let div = |p: &PotentialPair| {
                        (p.ax.get(m, i + 1, j) - p.ax.get(m, i - 1, j)) / (2.0 * grid.h)
                            + (p.ay.get(m, i, j + 1) - p.ay.get(m, i, j - 1)) / (2.0 * grid.hy)
                    };
                    divergence_gap = divergence_gap.max((div(p1) - div(p2)).abs());
                }
            }
        }
    }
    let norm_bound = [p1, p2]
        .iter()
        .map(|p| {
            let a_w = sobolev_proxy_sup(grid, &p.ax) + sobolev_proxy_sup(grid, &p.ay);
            let a_h = sobolev_proxy_l2(grid, &p.ax) + sobolev_proxy_l2(grid, &p.ay);
            a_w + a_h + sobolev_proxy_sup(grid, &p.q)
        })
        .sum();
    let pass = boundary_agreement <= tol.boundary && divergence_gap <= tol.divergence && norm_bound <= m_bound;
    AdmissibilityReport {
        boundary_agreement,
        divergence_gap,
        norm_bound,
        lambda: [p1.ellipticity_lambda(), p2.ellipticity_lambda()],
        alpha: 0.5,
        m_bound,
        tol_boundary: tol.boundary,
        tol_divergence: tol.divergence,
        pass,
    }
}

/// Space-time partial derivatives of order 0, 1 and 2.
fn derivative_family(grid: &SpaceTimeGrid, f: &RealField) -> Vec<RealField> {
    let (fx, fy) = grad_field(grid, f);
    let ft = diff_time(f, grid.k);
    let (fxx, fxy) = grad_field(grid, &fx);
    let (_, fyy) = grad_field(grid, &fy);
    let (ftx, fty) = grad_field(grid, &ft);
    let ftt = diff_time(&ft, grid.k);
    vec![f.clone(), fx, fy, ft, fxx, fxy, fyy, ftx, fty, ftt]
}

fn sobolev_proxy_sup(grid: &SpaceTimeGrid, f: &RealField) -> f64 {
    if f.max_abs() == 0.0 {
        return 0.0;
    }
    derivative_family(grid, f).iter().map(|g| g.max_abs()).sum()
}

fn sobolev_proxy_l2(grid: &SpaceTimeGrid, f: &RealField) -> f64 {
    if f.max_abs() == 0.0 {
        return 0.0;
    }
    derivative_family(grid, f).iter().map(|g| grid.l2_norm_r(g).powi(2)).sum::<f64>().sqrt()
}
