//! Log-log least squares for the Hölder-type relation `d ~ C eps^slope`.

use super::sweep::SweepRecord;
use crate::error::{Error, Result};
use crate::recovery::schedule_exponent;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(x, y)`; needs two distinct abscissae.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::invalid("a line fit needs at least two points"));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("all abscissae coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { 0.0 };
    Ok(LineFit { slope, intercept, r2 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderFit {
    pub rows: usize,
    pub d_a: LineFit,
    pub d_q: LineFit,
    /// `1 / (346 + 9n)` at `n = 2`, the exponent of the stability theorem.
    pub r_theory: f64,
}

/// `log d = slope log eps + intercept` for `dA` and `dq`, over successful
/// rows with `eps > 0`.
pub fn fit_holder(rows: &[SweepRecord]) -> Result<HolderFit> {
    let used: Vec<&SweepRecord> = rows.iter().filter(|r| r.ok() && r.eps > 0.0).collect();
    if used.len() < 4 {
        return Err(Error::invalid(format!("fit needs at least 4 rows with eps > 0, found {}", used.len())));
    }
    if used.iter().any(|r| !(r.d_a > 0.0 && r.d_q > 0.0)) {
        return Err(Error::invalid("dA and dq must be positive wherever eps > 0"));
    }
    let x: Vec<f64> = used.iter().map(|r| r.eps.ln()).collect();
    let ya: Vec<f64> = used.iter().map(|r| r.d_a.ln()).collect();
    let yq: Vec<f64> = used.iter().map(|r| r.d_q.ln()).collect();
    Ok(HolderFit { rows: used.len(), d_a: fit_line(&x, &ya)?, d_q: fit_line(&x, &yq)?, r_theory: schedule_exponent(2) })
}

/// Both sequences strictly increase along the order of `x`.
pub fn strictly_co_monotone(x: &[f64], y: &[f64]) -> bool {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    idx.windows(2).all(|w| x[w[1]] > x[w[0]] && y[w[1]] > y[w[0]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(f: impl Fn(f64) -> (f64, f64)) -> Vec<SweepRecord> {
        (0..6)
            .map(|i| {
                let eps = 1e-4 * 3f64.powi(i);
                let (da, dq) = f(eps);
                SweepRecord { a: i as f64, eps, d_a: da, d_q: dq, rec_err_a: None, rec_err_q: None, status: "ok".into() }
            })
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let f = fit_holder(&rows(|e| (e.powf(0.5), 2.0 * e.powf(0.25)))).unwrap();
        assert!((f.d_a.slope - 0.5).abs() <= 1e-10);
        assert!((f.d_q.slope - 0.25).abs() <= 1e-10);
        assert!((f.d_q.intercept - 2f64.ln()).abs() <= 1e-10);
        assert!((f.d_a.r2 - 1.0).abs() < 1e-12);
        assert_eq!(f.r_theory, 1.0 / 364.0);
    }

    #[test]
    fn constant_rows_have_zero_slope() {
        let f = fit_holder(&rows(|_| (0.3, 0.7))).unwrap();
        assert_eq!(f.d_a.slope, 0.0);
        assert_eq!(f.d_q.slope, 0.0);
    }

    #[test]
    fn too_few_rows() {
        let mut r = rows(|e| (e, e));
        r.truncate(3);
        assert!(fit_holder(&r).is_err());
        let mut z = rows(|e| (e, e));
        for row in z.iter_mut().take(3) {
            row.eps = 0.0;
        }
        assert!(fit_holder(&z).is_err());
    }

    #[test]
    fn co_monotone() {
        assert!(strictly_co_monotone(&[3.0, 1.0, 2.0], &[30.0, 10.0, 20.0]));
        assert!(!strictly_co_monotone(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]));
        assert!(!strictly_co_monotone(&[1.0, 1.0], &[1.0, 2.0]));
    }
}
