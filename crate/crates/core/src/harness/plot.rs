//! Deterministic SVG 1.1 log-log scatter plots with a fitted line.

use super::fit::fit_line;
use super::sweep::SweepRecord;
use crate::error::{Error, Result};
use std::fmt::Write;
use std::path::{Path, PathBuf};

const W: f64 = 480.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 48.0;

/// `[x_lo, x_hi, y_lo, y_hi]` in log10 units, padded by 10% of the data
/// span on every side (one decade when the span is zero).
pub fn plot_bounds(pts: &[(f64, f64)]) -> [f64; 4] {
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let d = if hi > lo { hi - lo } else { 1.0 };
        (lo - 0.1 * d, hi + 0.1 * d)
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0.log10()));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1.log10()));
    [x0, x1, y0, y1]
}

fn f(v: f64) -> String {
    format!("{v:.3}")
}

/// SVG text for one scatter; points must be positive.
pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64)]) -> Result<String> {
    if pts.is_empty() {
        return Err(Error::invalid("nothing to plot"));
    }
    if pts.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::invalid("log-log plots need positive finite values"));
    }
    let [x0, x1, y0, y1] = plot_bounds(pts);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |lx: f64| LEFT + (lx - x0) / (x1 - x0) * pw;
    let sy = |ly: f64| TOP + (y1 - ly) / (y1 - y0) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        W, H, W, H
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="#000000"/>"##, f(pw), f(ph));
    let mut ticks = String::new();
    for k in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let x = sx(k as f64);
        let _ = write!(ticks, "M{} {}v5 ", f(x), f(TOP + ph));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">1e{k}</text>"#, f(x), f(TOP + ph + 18.0));
    }
    for k in (y0.ceil() as i64)..=(y1.floor() as i64) {
        let y = sy(k as f64);
        let _ = write!(ticks, "M{} {}h-5 ", f(LEFT), f(y));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">1e{k}</text>"#, f(LEFT - 8.0), f(y + 4.0));
    }
    if !ticks.is_empty() {
        let _ = writeln!(s, r##"<path d="{}" stroke="#000000" fill="none"/>"##, ticks.trim_end());
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, f(LEFT + pw / 2.0), f(H - 10.0), escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        f(TOP + ph / 2.0),
        f(TOP + ph / 2.0),
        escape(ylabel)
    );
    let lx: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
    if let Ok(fit) = fit_line(&lx, &ly) {
        let (a, b) = (lx.iter().cloned().fold(f64::INFINITY, f64::min), lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#c0392b" stroke-width="1.5"/>"##,
            f(sx(a)),
            f(sy(fit.slope * a + fit.intercept)),
            f(sx(b)),
            f(sy(fit.slope * b + fit.intercept))
        );
        let _ = writeln!(s, r#"<text x="{}" y="18" font-size="12">{} (slope {:.4}, R2 {:.4})</text>"#, f(LEFT), escape(title), fit.slope, fit.r2);
    } else {
        let _ = writeln!(s, r#"<text x="{}" y="18" font-size="12">{}</text>"#, f(LEFT), escape(title));
    }
    for (x, y) in lx.iter().zip(&ly) {
        let _ = writeln!(s, r##"<circle cx="{}" cy="{}" r="3" fill="#1f4e79"/>"##, f(sx(*x)), f(sy(*y)));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `holder_dA.svg` and `holder_dq.svg` from successful rows with `eps > 0`.
pub fn emit_plots(rows: &[SweepRecord], out: &Path) -> Result<Vec<PathBuf>> {
    let used: Vec<&SweepRecord> = rows.iter().filter(|r| r.ok() && r.eps > 0.0).collect();
    if used.is_empty() {
        return Err(Error::invalid("no rows with eps > 0 to plot"));
    }
    std::fs::create_dir_all(out)?;
    let mut paths = Vec::new();
    for (name, label, pick) in [
        ("holder_dA.svg", "dA (l2 H1 proxy)", (|r: &SweepRecord| r.d_a) as fn(&SweepRecord) -> f64),
        ("holder_dq.svg", "dq (negative-order proxy)", |r: &SweepRecord| r.d_q),
    ] {
        let pts: Vec<(f64, f64)> = used.iter().map(|r| (r.eps, pick(r))).collect();
        let svg = scatter_svg(&format!("{label} against eps"), "eps (DN distance)", label, &pts)?;
        let p = out.join(name);
        std::fs::write(&p, svg)?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_two_markers_one_line() {
        let s = scatter_svg("t", "x", "y", &[(1e-3, 0.1), (1e-2, 0.2)]).unwrap();
        assert_eq!(s.matches("<circle").count(), 2);
        assert_eq!(s.matches("<line").count(), 1);
        assert_eq!(s, scatter_svg("t", "x", "y", &[(1e-3, 0.1), (1e-2, 0.2)]).unwrap());
        assert!(s.contains(r#"version="1.1""#));
    }

    #[test]
    fn bounds_have_ten_percent_margins() {
        let b = plot_bounds(&[(1e-4, 1.0), (1e-2, 10.0), (1e-3, 3.0)]);
        assert!((b[0] - (-4.2)).abs() < 1e-12 && (b[1] - (-1.8)).abs() < 1e-12);
        assert!((b[2] - (-0.1)).abs() < 1e-12 && (b[3] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn empty_or_invalid_input() {
        assert!(scatter_svg("t", "x", "y", &[]).is_err());
        assert!(scatter_svg("t", "x", "y", &[(0.0, 1.0)]).is_err());
        assert!(emit_plots(&[], Path::new("/nonexistent")).is_err());
    }
}
