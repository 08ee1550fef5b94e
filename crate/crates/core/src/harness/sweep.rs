//! Stability sweep over an amplitude ladder and its CSV table.

use super::config::ExperimentConfig;
use crate::dnmap::{boundary_basis, dn_distance, dn_matrix, BoundaryBasis, DnMatrix};
use crate::error::{Error, Result};
use crate::field::RealField;
use crate::go::{cutoff_chi, Cutoff};
use crate::grid::SpaceTimeGrid;
use crate::potentials::{check_admissibility, extend_pair, AdmissibilityTolerances, PotentialPair};
use crate::recovery::{recover_a, recover_q, schedule, PairData, RecoveredField};
use crate::C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::path::Path;

pub const CSV_HEADER: [&str; 8] = ["config_hash", "a", "eps", "dA_l2H1h", "dq_Hm1fft", "rec_err_A", "rec_err_q", "status"];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub a: f64,
    pub eps: f64,
    pub d_a: f64,
    pub d_q: f64,
    pub rec_err_a: Option<f64>,
    pub rec_err_q: Option<f64>,
    /// `ok`, or the error that aborted the point.
    pub status: String,
}

impl SweepRecord {
    fn failed(a: f64, e: &Error) -> Self {
        Self { a, eps: f64::NAN, d_a: f64::NAN, d_q: f64::NAN, rec_err_a: None, rec_err_q: None, status: e.to_string() }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Discrete `l2(0,T; H^1_h)` norm of a vector field given by two components.
pub fn h1_time_l2(grid: &SpaceTimeGrid, ax: &RealField, ay: &RealField) -> f64 {
    let [_, n1, n2] = grid.dims();
    let area = grid.h * grid.hy;
    let mut total = 0.0;
    for m in 0..grid.n_levels() {
        let mut s = 0.0;
        for f in [ax, ay] {
            let v = f.slice(m);
            for i in 0..n1 {
                for j in 0..n2 {
                    let p = i * n2 + j;
                    s += v[p] * v[p];
                    if i + 1 < n1 {
                        s += ((v[p + n2] - v[p]) / grid.h).powi(2);
                    }
                    if j + 1 < n2 {
                        s += ((v[p + 1] - v[p]) / grid.hy).powi(2);
                    }
                }
            }
        }
        total += grid.time_weight(m) * area * s;
    }
    total.sqrt()
}

/// Norm with FFT symbol weight `<tau, xi>^{-1}` over the periodic box of
/// levels `0..nt` and all space nodes; equals the `l2(Q)` norm when the
/// weight is dropped.
pub fn negative_order_norm(grid: &SpaceTimeGrid, f: &RealField) -> f64 {
    let (nt, n1, n2) = (grid.nt, grid.nx + 2, grid.ny + 2);
    let mut buf: Vec<C64> = f.data()[..nt * n1 * n2].iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    fft_axis(&mut buf, &mut planner, [nt, n1, n2], 2);
    fft_axis(&mut buf, &mut planner, [nt, n1, n2], 1);
    fft_axis(&mut buf, &mut planner, [nt, n1, n2], 0);
    let signed = |i: usize, n: usize| if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
    let (lt, l1, l2) = (grid.t_final, n1 as f64 * grid.h, n2 as f64 * grid.hy);
    let mut s = 0.0;
    for m in 0..nt {
        let tau = 2.0 * PI * signed(m, nt) / lt;
        for i in 0..n1 {
            let x1 = 2.0 * PI * signed(i, n1) / l1;
            for j in 0..n2 {
                let x2 = 2.0 * PI * signed(j, n2) / l2;
                let w = 1.0 + tau * tau + x1 * x1 + x2 * x2;
                s += buf[(m * n1 + i) * n2 + j].norm_sqr() / w;
            }
        }
    }
    let count = (nt * n1 * n2) as f64;
    (grid.k * grid.h * grid.hy * s / count).sqrt()
}

fn fft_axis(buf: &mut [C64], planner: &mut FftPlanner<f64>, dims: [usize; 3], axis: usize) {
    let n = dims[axis];
    let fft = planner.plan_fft_forward(n);
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut line = vec![C64::new(0.0, 0.0); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for (k, v) in line.iter_mut().enumerate() {
                *v = buf[base + k * stride];
            }
            fft.process(&mut line);
            for (k, v) in line.iter().enumerate() {
                buf[base + k * stride] = *v;
            }
        }
    }
}

/// Everything a sweep point needs that does not depend on the amplitude.
pub struct SweepContext {
    pub config: ExperimentConfig,
    pub grid: SpaceTimeGrid,
    pub base: PotentialPair,
    pub unit: PotentialPair,
    pub base_matrix: DnMatrix,
    pub basis: BoundaryBasis,
}

impl SweepContext {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let mut ctx = Self::new_without_matrix(config)?;
        ctx.base_matrix = dn_matrix(&ctx.grid, &ctx.base, &ctx.basis)?;
        Ok(ctx)
    }

    /// Context whose base matrix is left empty, for drivers that never use it.
    pub fn new_without_matrix(config: &ExperimentConfig) -> Result<Self> {
        let grid = config.grid()?;
        let base = match &config.potentials.base_file {
            Some(path) => super::field_io::read_potential_pair(Path::new(path), &grid)?,
            None => PotentialPair::sample_discrete_curl(&grid, &config.potentials.base),
        };
        let unit = PotentialPair::sample_discrete_curl(&grid, &config.perturbation());
        let basis = boundary_basis(&grid, config.dnmap.l_time, config.dnmap.m_space)?;
        let base_matrix = DnMatrix { entries: faer::Mat::zeros(0, 0), weights: Vec::new(), l_time: 0, m_space: 0, grid_shape: [0; 3] };
        Ok(Self { config: config.clone(), grid, base, unit, base_matrix, basis })
    }

    pub fn matrix_of(&self, p: &PotentialPair) -> Result<DnMatrix> {
        dn_matrix(&self.grid, p, &self.basis)
    }

    pub fn pair(&self, a: f64) -> PotentialPair {
        let u = &self.unit;
        let scaled = PotentialPair::from_fields(&self.grid, u.ax.map(|v| v * a), u.ay.map(|v| v * a), u.q.map(|v| v * a)).expect("same shape");
        self.base.add(&scaled)
    }

    /// Admissibility of the largest perturbation on the ladder.
    pub fn check_family(&self) -> Result<()> {
        let a = self.config.ladder().into_iter().fold(0.0, f64::max);
        let p2 = self.pair(a);
        let r = check_admissibility(&self.grid, &self.base, &p2, self.config.potentials.m_bound, AdmissibilityTolerances::for_grid(&self.grid));
        if r.boundary_agreement > r.tol_boundary || r.divergence_gap > r.tol_divergence {
            return Err(Error::invalid(format!(
                "perturbation is not admissible: boundary agreement {:.3e}, divergence gap {:.3e}",
                r.boundary_agreement, r.divergence_gap
            )));
        }
        Ok(())
    }

    pub fn point(&self, a: f64) -> Result<SweepRecord> {
        let g = &self.grid;
        let p2 = self.pair(a);
        let m2 = self.matrix_of(&p2)?;
        let eps = dn_distance(&self.base_matrix, &m2)?;
        let d = self.base.sub(&p2);
        let d_a = h1_time_l2(g, &d.ax, &d.ay);
        let d_q = negative_order_norm(g, &d.q);
        let (mut rec_err_a, mut rec_err_q) = (None, None);
        if self.config.recovery.in_sweep {
            let run = run_recovery(&self.config, g, &self.base, &p2, eps)?;
            rec_err_a = Some(run.err_a);
            rec_err_q = Some(run.err_q);
        }
        Ok(SweepRecord { a, eps, d_a, d_q, rec_err_a, rec_err_q, status: "ok".into() })
    }
}

/// Recovered fields of one pair with their relative errors.
pub struct RecoveryRun {
    pub a: RecoveredField,
    pub q: RecoveredField,
    pub err_a: f64,
    pub err_q: f64,
}

/// Recovery of `chi^2 (A1 - A2)` and `chi^2 (q1 - q2)` with relative `l2(Q)`
/// errors against the true differences.
pub fn run_recovery(config: &ExperimentConfig, g: &SpaceTimeGrid, p1: &PotentialPair, p2: &PotentialPair, eps: f64) -> Result<RecoveryRun> {
    let (e1, e2) = extend_pair(g, p1, p2, config.potentials.pad)?;
    let data = PairData { grid: g, p1, p2, ext1: &e1, ext2: &e2 };
    // eps = 0 has no schedule of its own; zero data recovers zero at any radius
    let sched = schedule(eps.max(f64::MIN_POSITIVE), 2, g.t_final)?.for_grid(g, &config.recovery.overrides())?;
    let a = recover_a(data, &sched)?;
    let q = recover_q(data, &sched, &a)?;
    let chi = cutoff_chi(sched.delta, g)?;
    let d = p1.sub(p2);
    let err_a = relative_error(g, &chi, &[&a.components[0], &a.components[1]], &[&d.ax, &d.ay]);
    let err_q = relative_error(g, &chi, &[&q.components[0]], &[&d.q]);
    Ok(RecoveryRun { a, q, err_a, err_q })
}

/// `|rec - chi^2 truth| / |chi^2 truth|` over all nodes and levels (absolute
/// when the truth vanishes).
pub fn relative_error(g: &SpaceTimeGrid, chi: &Cutoff, rec: &[&RealField], truth: &[&RealField]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (r, t) in rec.iter().zip(truth) {
        for m in 0..g.n_levels() {
            let c2 = chi.values[m] * chi.values[m];
            for (a, b) in r.slice(m).iter().zip(t.slice(m)) {
                num += (a - c2 * b).powi(2);
                den += (c2 * b).powi(2);
            }
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// One record per ladder amplitude, in ascending amplitude order. A failed
/// point is logged and recorded with its error.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    let ctx = SweepContext::new(config)?;
    ctx.check_family()?;
    let ladder = config.ladder();
    let rows: Vec<SweepRecord> = ladder
        .par_iter()
        .map(|&a| match ctx.point(a) {
            Ok(r) => r,
            Err(e) => {
                log::error!("sweep point a = {a}: {e}");
                SweepRecord::failed(a, &e)
            }
        })
        .collect();
    Ok(rows)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// A CSV table whose first column is the config hash.
pub fn write_table(path: &Path, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut head = vec!["config_hash"];
    head.extend_from_slice(header);
    w.write_record(&head).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![hash.to_string()];
        rec.extend(r.iter().cloned());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn fmt_num(v: f64) -> String {
    num(v)
}

/// Writes the table, or appends to an existing one only when it carries
/// the same config hash.
pub fn write_sweep_csv(path: &Path, hash: &str, rows: &[SweepRecord], append: bool) -> Result<()> {
    let exists = path.exists();
    if append && exists {
        let (old, _) = read_sweep_csv(path)?;
        if old.iter().any(|h| h != hash) {
            return Err(Error::invalid(format!("refusing to append to {}: it was written under a different config hash", path.display())));
        }
    }
    let file = std::fs::OpenOptions::new().create(true).write(true).append(append).truncate(!append).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if !(append && exists) {
        w.write_record(CSV_HEADER).map_err(csv_err)?;
    }
    for r in rows {
        w.write_record([hash.to_string(), num(r.a), num(r.eps), num(r.d_a), num(r.d_q), opt(r.rec_err_a), opt(r.rec_err_q), r.status.clone()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-row config hashes and records.
pub fn read_sweep_csv(path: &Path) -> Result<(Vec<String>, Vec<SweepRecord>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| Error::format(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::format(format!("{}: unexpected header", path.display())));
    }
    let (mut hashes, mut rows) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(e.to_string()))?;
        let f = |i: usize| -> Result<f64> {
            let s = &rec[i];
            s.parse::<f64>().map_err(|_| Error::format(format!("bad number {s:?}")))
        };
        let o = |i: usize| -> Result<Option<f64>> { if rec[i].is_empty() { Ok(None) } else { f(i).map(Some) } };
        hashes.push(rec[0].to_string());
        rows.push(SweepRecord { a: f(1)?, eps: f(2)?, d_a: f(3)?, d_q: f(4)?, rec_err_a: o(5)?, rec_err_q: o(6)?, status: rec[7].to_string() });
    }
    Ok((hashes, rows))
}

/// Relative change of `eps` under doubling of both basis sizes, stopping
/// once it falls below 5% or after `max_doublings`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct BasisStep {
    pub l_time: usize,
    pub m_space: usize,
    pub eps: f64,
    pub rel_change: Option<f64>,
}

pub fn basis_convergence(grid: &SpaceTimeGrid, p1: &PotentialPair, p2: &PotentialPair, l0: usize, m0: usize, max_doublings: usize) -> Result<(Vec<BasisStep>, bool)> {
    let mut steps: Vec<BasisStep> = Vec::new();
    let (mut l, mut m) = (l0, m0);
    for _ in 0..=max_doublings {
        if m > grid.nx.min(grid.ny) / 2 {
            break;
        }
        let b = boundary_basis(grid, l, m)?;
        let eps = dn_distance(&dn_matrix(grid, p1, &b)?, &dn_matrix(grid, p2, &b)?)?;
        let rel_change = steps.last().map(|s| if s.eps > 0.0 { (eps - s.eps).abs() / s.eps } else { 0.0 });
        steps.push(BasisStep { l_time: l, m_space: m, eps, rel_change });
        if rel_change.is_some_and(|c| c < 0.05) {
            return Ok((steps, true));
        }
        l *= 2;
        m *= 2;
    }
    Ok((steps, false))
}
