//! Dirichlet-to-Neumann traces, their matrix over a boundary basis, and
//! the weighted operator-norm distance between two such matrices.

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::forward::{fill_slice, march_batch, BoundarySeries, Stepper};
use crate::grid::{Edge, SpaceTimeGrid};
use crate::potentials::PotentialPair;
use crate::C64;
use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;
use std::f64::consts::PI;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Samples on the trace nodes (corners excluded) at every time level.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub n_levels: usize,
    pub n_trace: usize,
    pub data: Vec<C64>,
}

impl Trace {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        Self { n_levels: grid.n_levels(), n_trace: grid.n_trace(), data: vec![C64::new(0.0, 0.0); grid.n_levels() * grid.n_trace()] }
    }

    #[inline]
    pub fn get(&self, m: usize, b: usize) -> C64 {
        self.data[m * self.n_trace + b]
    }

    pub fn level_mut(&mut self, m: usize) -> &mut [C64] {
        let n = self.n_trace;
        &mut self.data[m * n..(m + 1) * n]
    }

    /// Weighted `l2(Sigma)` inner product `sum w_t w_b a conj(b)`.
    pub fn inner(&self, other: &Trace, grid: &SpaceTimeGrid) -> C64 {
        let nodes = grid.trace_nodes();
        let mut s = C64::new(0.0, 0.0);
        for m in 0..self.n_levels {
            let wt = grid.time_weight(m);
            for (b, node) in nodes.iter().enumerate() {
                s += wt * node.weight * self.get(m, b) * other.get(m, b).conj();
            }
        }
        s
    }

    pub fn norm(&self, grid: &SpaceTimeGrid) -> f64 {
        self.inner(self, grid).re.max(0.0).sqrt()
    }

    pub fn sub(&self, other: &Trace) -> Trace {
        Trace { data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(), ..self.clone() }
    }
}

/// Restriction of wall data to the trace nodes.
pub fn trace_of(grid: &SpaceTimeGrid, g: &BoundarySeries) -> Trace {
    let mut t = Trace::zeros(grid);
    for m in 0..grid.n_levels() {
        for b in 0..grid.n_trace() {
            t.data[m * grid.n_trace() + b] = g.get(m, b);
        }
    }
    t
}

/// One-sided normal stencil data per trace node.
struct NormalStencil {
    /// slice indices of the wall node and its two inward neighbours
    idx: Vec<[usize; 3]>,
    inv_2h: Vec<f64>,
}

impl NormalStencil {
    fn new(grid: &SpaceTimeGrid) -> Self {
        let ny2 = grid.ny + 2;
        let mut idx = Vec::with_capacity(grid.n_trace());
        let mut inv_2h = Vec::with_capacity(grid.n_trace());
        for node in grid.trace_nodes() {
            let (dx, dy, step): (isize, isize, f64) = match node.edge {
                Edge::Bottom => (0, 1, grid.hy),
                Edge::Top => (0, -1, grid.hy),
                Edge::Left => (1, 0, grid.h),
                Edge::Right => (-1, 0, grid.h),
            };
            let at = |o: isize| ((node.ix as isize + o * dx) as usize) * ny2 + (node.iy as isize + o * dy) as usize;
            idx.push([at(0), at(1), at(2)]);
            inv_2h.push(1.0 / (2.0 * step));
        }
        Self { idx, inv_2h }
    }

    /// `A . nu` at the trace nodes of level `m`.
    fn a_normal(&self, grid: &SpaceTimeGrid, pot: &PotentialPair, m: usize) -> Vec<f64> {
        grid.trace_nodes()
            .iter()
            .map(|n| pot.ax.get(m, n.ix, n.iy) * n.normal[0] + pot.ay.get(m, n.ix, n.iy) * n.normal[1])
            .collect()
    }
}

/// `(D_nu + i A.nu) u` on the trace nodes of one full slice.
fn trace_level(st: &NormalStencil, a_nu: &[f64], slice: &[C64], out: &mut [C64]) {
    for (b, [i0, i1, i2]) in st.idx.iter().enumerate() {
        let dn = (3.0 * slice[*i0] - 4.0 * slice[*i1] + slice[*i2]) * st.inv_2h[b];
        out[b] = dn + I * a_nu[b] * slice[*i0];
    }
}

/// DN trace of the solution with wall data `g`.
pub fn dn_apply(grid: &SpaceTimeGrid, pot: &PotentialPair, g: &BoundarySeries) -> Result<Trace> {
    crate::forward::check_compatible(grid, g)?;
    Ok(dn_apply_batch(grid, pot, &[g])?.pop().unwrap())
}

/// DN traces of several wall data sets sharing one march.
pub fn dn_apply_batch(grid: &SpaceTimeGrid, pot: &PotentialPair, gs: &[&BoundarySeries]) -> Result<Vec<Trace>> {
    let st = NormalStencil::new(grid);
    let mut out: Vec<Trace> = gs.iter().map(|_| Trace::zeros(grid)).collect();
    let mut slice = vec![C64::new(0.0, 0.0); (grid.nx + 2) * (grid.ny + 2)];
    march_batch(grid, pot, gs, None, None, |m, state| {
        let a_nu = st.a_normal(grid, pot, m);
        for (c, g) in gs.iter().enumerate() {
            fill_slice(grid, state, c, Some(g.level(m)), &mut slice);
            trace_level(&st, &a_nu, &slice, out[c].level_mut(m));
        }
        Ok(())
    })?;
    Ok(out)
}

/// DN trace of a full space-time field (used on manufactured solutions).
pub fn trace_of_field(grid: &SpaceTimeGrid, pot: &PotentialPair, u: &ComplexField) -> Trace {
    let st = NormalStencil::new(grid);
    let mut out = Trace::zeros(grid);
    for m in 0..grid.n_levels() {
        let a_nu = st.a_normal(grid, pot, m);
        trace_level(&st, &a_nu, u.slice(m), out.level_mut(m));
    }
    out
}

/// Adjoint of `g -> <Lambda g, c>_W` with respect to the plain pairing
/// `sum_{m, wall nodes} g conj(Z)`: for every test trace `c` returns `Z`
/// such that `<Lambda g, c>_W = sum g conj(Z)` for all wall data `g`.
pub fn dn_adjoint_batch(grid: &SpaceTimeGrid, pot: &PotentialPair, cs: &[&Trace]) -> Result<Vec<BoundarySeries>> {
    let n = grid.n_interior();
    let nrhs = cs.len();
    let nt = grid.nt;
    let ny2 = grid.ny + 2;
    let st = NormalStencil::new(grid);
    let nodes = grid.trace_nodes();
    // interior index of a slice index, or MAX on walls
    let mut interior_of = vec![usize::MAX; (grid.nx + 2) * ny2];
    for ix in 1..=grid.nx {
        for iy in 1..=grid.ny {
            interior_of[ix * ny2 + iy] = grid.interior_index(ix, iy);
        }
    }
    let mut zs: Vec<BoundarySeries> = cs.iter().map(|_| BoundarySeries::zeros(grid)).collect();
    // weighted test data W c and the direct wall contribution (N_B + i A nu)^H W c
    let weighted = |m: usize, c: usize, b: usize| grid.time_weight(m) * nodes[b].weight * cs[c].get(m, b);
    let wall_of_slice = crate::forward::wall_lookup(grid);
    let adjoint_trace = |m: usize, zs: &mut [BoundarySeries]| -> Mat<C64> {
        let a_nu = st.a_normal(grid, pot, m);
        let mut e = Mat::<C64>::zeros(n, nrhs);
        for c in 0..nrhs {
            let zl = zs[c].level_mut(m);
            for (b, [i0, i1, i2]) in st.idx.iter().enumerate() {
                let w = weighted(m, c, b);
                let s = st.inv_2h[b];
                // wall node coefficient 3 s + i A.nu, conjugated
                zl[wall_of_slice[*i0]] += (C64::new(3.0 * s, 0.0) + I * a_nu[b]).conj() * w;
                for (idx, coef) in [(*i1, -4.0 * s), (*i2, s)] {
                    match interior_of[idx] {
                        usize::MAX => zl[wall_of_slice[idx]] += coef * w,
                        p => e[(p, c)] += coef * w,
                    }
                }
            }
        }
        e
    };
    let mut stepper = Stepper::new(grid, pot)?;
    let kap = stepper.kappa();
    let mut y = adjoint_trace(nt, &mut zs);
    for m in (0..nt).rev() {
        let (ham, lu) = stepper.prepare(m)?;
        let mut z = y;
        lu.solve_adjoint_in_place(z.as_mut());
        for c in 0..nrhs {
            for &(row, b, v) in &ham.coupling {
                let add = I * kap * v.conj() * z[(row, c)];
                zs[c].level_mut(m + 1)[b] += add;
                zs[c].level_mut(m)[b] += add;
            }
        }
        if m == 0 {
            break;
        }
        let hz = &ham.interior * &z;
        let e = adjoint_trace(m, &mut zs);
        let mut ynew = e;
        for c in 0..nrhs {
            for i in 0..n {
                ynew[(i, c)] += z[(i, c)] + I * kap * hz[(i, c)];
            }
        }
        y = ynew;
    }
    // level 0: u^0 = 0, only the direct wall term survives
    let _ = adjoint_trace(0, &mut zs);
    Ok(zs)
}

/// Plain pairing `sum_{m, wall nodes} g conj(z)`.
pub fn wall_pairing(g: &BoundarySeries, z: &BoundarySeries) -> C64 {
    g.data.iter().zip(&z.data).map(|(a, b)| a * b.conj()).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryBasis {
    pub l_time: usize,
    pub m_space: usize,
    pub elements: Vec<BoundarySeries>,
    /// `(edge, l, m)` label of every element.
    pub labels: Vec<(Edge, usize, usize)>,
    pub weights: Vec<f64>,
}

/// `(t/T)^2 sin(pi l t / T)`: vanishes with its derivative at `t = 0`.
pub fn envelope(l: usize, t: f64, t_final: f64) -> f64 {
    let s = t / t_final;
    s * s * (PI * l as f64 * s).sin()
}

pub fn mode_weight(l: usize, m: usize, t_final: f64) -> f64 {
    let a = (1.0 + (PI * l as f64 / t_final).powi(2)).powf(0.75);
    let b = (1.0 + (PI * m as f64).powi(2)).powf(1.5);
    (a + b).sqrt()
}

/// Raw element `eta_l(t) sin(m pi s)` on one edge (zero elsewhere).
pub fn raw_element(grid: &SpaceTimeGrid, edge: Edge, l: usize, m: usize) -> BoundarySeries {
    let nodes = grid.boundary_nodes();
    BoundarySeries::from_fn(grid, |lvl, b| {
        let n = &nodes[b];
        if n.corner || n.edge != edge {
            C64::new(0.0, 0.0)
        } else {
            C64::new(envelope(l, grid.t(lvl), grid.t_final) * (PI * m as f64 * n.arc).sin(), 0.0)
        }
    })
}

fn weighted_inner(grid: &SpaceTimeGrid, a: &BoundarySeries, b: &BoundarySeries) -> C64 {
    let nodes = grid.trace_nodes();
    let mut s = C64::new(0.0, 0.0);
    for m in 0..grid.n_levels() {
        let wt = grid.time_weight(m);
        for (i, node) in nodes.iter().enumerate() {
            s += wt * node.weight * a.get(m, i) * b.get(m, i).conj();
        }
    }
    s
}

/// `4 L M` elements, edge-major, orthonormalised in weighted `l2(Sigma)` by
/// modified Gram-Schmidt.
pub fn boundary_basis(grid: &SpaceTimeGrid, l_time: usize, m_space: usize) -> Result<BoundaryBasis> {
    if l_time == 0 || m_space == 0 {
        return Err(Error::invalid("basis sizes must be at least 1"));
    }
    if 2 * m_space > grid.nx.min(grid.ny) {
        return Err(Error::invalid(format!("spatial modes up to {m_space} are not resolvable on nx = {}", grid.nx)));
    }
    let mut elements = Vec::new();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for edge in Edge::ALL {
        for l in 1..=l_time {
            for m in 1..=m_space {
                let mut e = raw_element(grid, edge, l, m);
                for prev in &elements {
                    let c = weighted_inner(grid, &e, prev);
                    for (v, p) in e.data.iter_mut().zip(&prev.data) {
                        *v -= c * p;
                    }
                }
                let nrm = weighted_inner(grid, &e, &e).re.sqrt();
                if !(nrm > 1e-12) {
                    return Err(Error::numerical("basis element collapsed during orthogonalisation"));
                }
                e.data.iter_mut().for_each(|v| *v /= nrm);
                elements.push(e);
                labels.push((edge, l, m));
                weights.push(mode_weight(l, m, grid.t_final));
            }
        }
    }
    Ok(BoundaryBasis { l_time, m_space, elements, labels, weights })
}

impl BoundaryBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn gram(&self, grid: &SpaceTimeGrid) -> Mat<C64> {
        let n = self.len();
        Mat::from_fn(n, n, |i, j| weighted_inner(grid, &self.elements[i], &self.elements[j]))
    }
}

/// DN matrix: column `j` holds `sqrt(w_t w_b) (Lambda g_j)` on trace nodes,
/// rows ordered time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DnMatrix {
    pub entries: Mat<C64>,
    pub weights: Vec<f64>,
    pub l_time: usize,
    pub m_space: usize,
    pub grid_shape: [usize; 3],
}

/// Columns per shared march; fixed so results never depend on the thread
/// count.
const COLUMN_CHUNK: usize = 16;

pub fn dn_matrix(grid: &SpaceTimeGrid, pot: &PotentialPair, basis: &BoundaryBasis) -> Result<DnMatrix> {
    let rows = grid.n_levels() * grid.n_trace();
    let chunks: Vec<&[BoundarySeries]> = basis.elements.chunks(COLUMN_CHUNK).collect();
    let traces: Vec<Vec<Trace>> = chunks
        .par_iter()
        .map(|chunk| {
            let refs: Vec<&BoundarySeries> = chunk.iter().collect();
            dn_apply_batch(grid, pot, &refs)
        })
        .collect::<Result<_>>()?;
    let nodes = grid.trace_nodes();
    let scale: Vec<f64> = (0..rows)
        .map(|r| (grid.time_weight(r / grid.n_trace()) * nodes[r % grid.n_trace()].weight).sqrt())
        .collect();
    let mut entries = Mat::<C64>::zeros(rows, basis.len());
    for (j, t) in traces.iter().flatten().enumerate() {
        for r in 0..rows {
            entries[(r, j)] = scale[r] * t.data[r];
        }
    }
    Ok(DnMatrix { entries, weights: basis.weights.clone(), l_time: basis.l_time, m_space: basis.m_space, grid_shape: grid.dims() })
}

/// Largest singular value of `(M1 - M2) W^{-1}`.
pub fn dn_distance(m1: &DnMatrix, m2: &DnMatrix) -> Result<f64> {
    if m1.weights != m2.weights || m1.grid_shape != m2.grid_shape || m1.entries.ncols() != m2.entries.ncols() {
        return Err(Error::invalid("DN matrices use different bases or grids"));
    }
    let (r, c) = (m1.entries.nrows(), m1.entries.ncols());
    let d = Mat::<C64>::from_fn(r, c, |i, j| (m1.entries[(i, j)] - m2.entries[(i, j)]) / m1.weights[j]);
    largest_singular_value(&d)
}

pub(crate) fn largest_singular_value(d: &Mat<C64>) -> Result<f64> {
    if d.ncols() == 0 || d.nrows() == 0 {
        return Ok(0.0);
    }
    if d.col_iter().all(|col| col.iter().all(|v| *v == C64::new(0.0, 0.0))) {
        return Ok(0.0);
    }
    // thin QR first: the matrix is tall and skinny
    let r = if d.nrows() > 2 * d.ncols() {
        let qr = d.qr();
        qr.thin_R().to_owned()
    } else {
        d.clone()
    };
    let sv = r.singular_values().map_err(|e| Error::numerical(format!("singular values: {e:?}")))?;
    Ok(sv.iter().fold(0.0f64, |a, &v| a.max(v)))
}

pub fn frobenius(m: &Mat<C64>) -> f64 {
    m.col_iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{gauge_transform, GaugeFunction, PotentialSpec, ScalarProfile, TimeProfile, VectorProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pot(grid: &SpaceTimeGrid) -> PotentialPair {
        PotentialPair::sample(
            grid,
            &PotentialSpec {
                a: VectorProfile::Components {
                    x: ScalarProfile::Gaussian { center: [0.3, 0.6], width: 0.3, amp: 0.6, time: TimeProfile::Constant },
                    y: ScalarProfile::Constant { value: -0.3 },
                },
                q: ScalarProfile::Gaussian { center: [0.6, 0.5], width: 0.2, amp: 1.2, time: TimeProfile::Sine { freq: 1.0, depth: 0.2, phase: 0.0 } },
            },
        )
    }

    #[test]
    fn basis_elements_start_flat() {
        let g = SpaceTimeGrid::new(15, 15, 16, 1.0).unwrap();
        let b = boundary_basis(&g, 1, 1).unwrap();
        assert_eq!(b.len(), 4);
        for e in &b.elements {
            assert!(e.level(0).iter().all(|v| *v == C64::new(0.0, 0.0)));
            crate::forward::check_compatible(&g, e).unwrap();
        }
        assert!(boundary_basis(&g, 1, 8).is_err());
        assert!(boundary_basis(&g, 0, 1).is_err());
    }

    #[test]
    fn weights_monotone() {
        for l in 1..6 {
            for m in 1..6 {
                assert!(mode_weight(l + 1, m, 1.0) > mode_weight(l, m, 1.0));
                assert!(mode_weight(l, m + 1, 1.0) > mode_weight(l, m, 1.0));
            }
        }
    }

    #[test]
    fn gram_is_identity() {
        let g = SpaceTimeGrid::new(15, 15, 16, 1.0).unwrap();
        let b = boundary_basis(&g, 3, 3).unwrap();
        let gm = b.gram(&g);
        for i in 0..b.len() {
            for j in 0..b.len() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gm[(i, j)] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_data_zero_trace() {
        let g = SpaceTimeGrid::new(9, 9, 8, 1.0).unwrap();
        let t = dn_apply(&g, &pot(&g), &BoundarySeries::zeros(&g)).unwrap();
        assert!(t.data.iter().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn batch_equals_single() {
        let g = SpaceTimeGrid::new(11, 11, 16, 1.0).unwrap();
        let p = pot(&g);
        let b = boundary_basis(&g, 2, 1).unwrap();
        let refs: Vec<&BoundarySeries> = b.elements.iter().collect();
        let batch = dn_apply_batch(&g, &p, &refs).unwrap();
        for (e, t) in b.elements.iter().zip(&batch) {
            let single = dn_apply(&g, &p, e).unwrap();
            let d = single.sub(t).norm(&g);
            assert!(d <= 1e-12 * single.norm(&g), "{d}");
        }
    }

    #[test]
    fn adjoint_matches_direct_pairing() {
        let g = SpaceTimeGrid::new(11, 11, 16, 1.0).unwrap();
        let p = pot(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nb = g.boundary_nodes().len();
        let amp: Vec<C64> = (0..nb).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let gdat = BoundarySeries::from_fn(&g, |m, b| {
            let t = g.t(m);
            amp[b] * t * t * (1.0 + (3.0 * t + b as f64).sin())
        });
        let mut c = Trace::zeros(&g);
        c.data.iter_mut().for_each(|v| *v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let lam = dn_apply_batch(&g, &p, &[&gdat]).unwrap().pop().unwrap();
        let direct = lam.inner(&c, &g);
        let z = dn_adjoint_batch(&g, &p, &[&c]).unwrap().pop().unwrap();
        let via = wall_pairing(&gdat, &z);
        assert!((direct - via).norm() <= 1e-11 * direct.norm(), "{direct} vs {via}");
    }

    #[test]
    fn matrix_linear_in_columns() {
        let g = SpaceTimeGrid::new(11, 11, 16, 1.0).unwrap();
        let p = pot(&g);
        let b = boundary_basis(&g, 1, 1).unwrap();
        let m = dn_matrix(&g, &p, &b).unwrap();
        let sum = BoundarySeries { data: b.elements[0].data.iter().zip(&b.elements[2].data).map(|(a, c)| a + c).collect(), ..b.elements[0].clone() };
        let t = dn_apply(&g, &p, &sum).unwrap();
        let nodes = g.trace_nodes();
        let mut worst: f64 = 0.0;
        for r in 0..m.entries.nrows() {
            let s = (g.time_weight(r / g.n_trace()) * nodes[r % g.n_trace()].weight).sqrt();
            worst = worst.max((s * t.data[r] - m.entries[(r, 0)] - m.entries[(r, 2)]).norm());
        }
        assert!(worst < 1e-12 * frobenius(&m.entries), "{worst}");
        assert_eq!(dn_distance(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn distance_symmetric_and_triangle() {
        let g = SpaceTimeGrid::new(11, 11, 16, 1.0).unwrap();
        let b = boundary_basis(&g, 1, 2).unwrap();
        let m0 = dn_matrix(&g, &PotentialPair::zeros(&g), &b).unwrap();
        let m1 = dn_matrix(&g, &pot(&g), &b).unwrap();
        let p2 = PotentialPair::sample(&g, &PotentialSpec { q: ScalarProfile::Constant { value: 3.0 }, ..Default::default() });
        let m2 = dn_matrix(&g, &p2, &b).unwrap();
        let d01 = dn_distance(&m0, &m1).unwrap();
        let d10 = dn_distance(&m1, &m0).unwrap();
        assert!((d01 - d10).abs() <= 1e-12 * d01);
        let d12 = dn_distance(&m1, &m2).unwrap();
        let d02 = dn_distance(&m0, &m2).unwrap();
        assert!(d02 <= d01 + d12 + 1e-12 * d02);
    }

    #[test]
    fn distance_matches_rayleigh_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..5 {
            let (r, c) = (40, 3);
            let w: Vec<f64> = (0..c).map(|j| 1.0 + j as f64 * 0.7).collect();
            let mk = |rng: &mut ChaCha8Rng| Mat::<C64>::from_fn(r, c, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let a = DnMatrix { entries: mk(&mut rng), weights: w.clone(), l_time: 1, m_space: 1, grid_shape: [1, 1, 1] };
            let b = DnMatrix { entries: mk(&mut rng), weights: w.clone(), l_time: 1, m_space: 1, grid_shape: [1, 1, 1] };
            let eps = dn_distance(&a, &b).unwrap();
            // Monte-Carlo oracle: sup |(A - B) g| / |W g| over random g,
            // then random-perturbation hill climbing from the best sample
            let ratio = |gv: &[C64]| {
                let mut num = 0.0;
                for i in 0..r {
                    let mut s = C64::new(0.0, 0.0);
                    for j in 0..c {
                        s += (a.entries[(i, j)] - b.entries[(i, j)]) * gv[j];
                    }
                    num += s.norm_sqr();
                }
                let den: f64 = (0..c).map(|j| (w[j] * gv[j]).norm_sqr()).sum();
                (num / den).sqrt()
            };
            let mut best: f64 = 0.0;
            let mut arg = vec![C64::new(0.0, 0.0); c];
            for _ in 0..10_000 {
                let gv: Vec<C64> = (0..c).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                let v = ratio(&gv);
                if v > best {
                    best = v;
                    arg = gv;
                }
            }
            let mut step = 0.3;
            for _ in 0..5_000 {
                let gv: Vec<C64> = arg.iter().map(|x| x + step * C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                let v = ratio(&gv);
                if v > best {
                    best = v;
                    arg = gv;
                } else {
                    step *= 0.999;
                }
            }
            assert!(best <= eps * (1.0 + 1e-12), "trial {trial}");
            assert!(best >= 0.98 * eps, "trial {trial}: {best} vs {eps}");
        }
    }

    #[test]
    fn free_trace_self_converges() {
        // low-frequency data on the bottom edge, identical analytic samples
        // at every resolution
        let lam = |n: usize, nt: usize| {
            let g = SpaceTimeGrid::new(n, n, nt, 1.0).unwrap();
            let data = raw_element(&g, Edge::Bottom, 1, 1);
            (g.clone(), dn_apply(&g, &PotentialPair::zeros(&g), &data).unwrap())
        };
        let (g1, l1) = lam(15, 16);
        let (g2, l2) = lam(31, 32);
        let (_, l4) = lam(63, 64);
        // compare on the coarse nodes and levels
        let diff = |fine: &Trace, r: usize, finer_n: usize, coarse: &Trace| {
            let gf = SpaceTimeGrid::new(finer_n, finer_n, 16 * r, 1.0).unwrap();
            let mut s = 0.0;
            for m in 0..g1.n_levels() {
                for (b, node) in g1.trace_nodes().iter().enumerate() {
                    let fb = gf.trace_nodes().iter().position(|f| f.ix == node.ix * r && f.iy == node.iy * r
                        && f.edge == node.edge).unwrap();
                    s += g1.time_weight(m) * node.weight * (fine.get(m * r, fb) - coarse.get(m, b)).norm_sqr();
                }
            }
            s.sqrt()
        };
        // lambda_31 and lambda_63 sampled on the coarse nodes
        let e1 = diff(&l2, 2, 31, &l1);
        let coarse_of_2 = {
            let mut t = Trace::zeros(&g1);
            for m in 0..g1.n_levels() {
                for (b, node) in g1.trace_nodes().iter().enumerate() {
                    let fb = g2.trace_nodes().iter().position(|f| f.ix == node.ix * 2 && f.iy == node.iy * 2 && f.edge == node.edge).unwrap();
                    t.level_mut(m)[b] = l2.get(2 * m, fb);
                }
            }
            t
        };
        let e2 = diff(&l4, 4, 63, &coarse_of_2);
        let rate = (e1 / e2).log2();
        assert!(rate >= 1.5, "{e1} {e2} {rate}");
    }

    #[test]
    fn gauge_invariance_small_grid() {
        let g = SpaceTimeGrid::new(31, 31, 32, 1.0).unwrap();
        let p = pot(&g);
        let b = boundary_basis(&g, 1, 1).unwrap();
        let m = dn_matrix(&g, &p, &b).unwrap();
        let phi = GaugeFunction::sample(&g, |t, x, y| 0.5 * (1.0 + t) * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()).unwrap();
        let pg = gauge_transform(&g, &p, &phi).unwrap();
        let mg = dn_matrix(&g, &pg, &b).unwrap();
        let d = Mat::<C64>::from_fn(m.entries.nrows(), m.entries.ncols(), |i, j| m.entries[(i, j)] - mg.entries[(i, j)]);
        let rel = frobenius(&d) / frobenius(&m.entries);
        assert!(rel <= 10.0 * (g.h * g.h + g.k * g.k), "{rel}");
    }
}
