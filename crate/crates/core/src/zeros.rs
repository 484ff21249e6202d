//! Sampling grids, tail truncation and sign-change zero counting.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sorted grid on `[lo, hi]` (finite) mixing uniform points with geometric
/// clusters toward both ends, so that intervals spanning many decades or
/// ending at a singular point are resolved.
pub fn sample_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo < hi && lo.is_finite() && hi.is_finite(), "grid needs a finite interval");
    let n = n.max(2);
    let w = hi - lo;
    let mut pts = Vec::with_capacity(2 * n);
    let uniform = n / 2;
    for i in 0..=uniform {
        pts.push(lo + w * i as f64 / uniform.max(1) as f64);
    }
    let per_end = n / 4;
    if per_end >= 2 {
        let near = |end: f64| 1e-9 * end.abs().max(1.0);
        for (end, dir) in [(lo, 1.0), (hi, -1.0)] {
            let d0 = near(end).min(w * 1e-3);
            let d1 = 0.5 * w;
            if d0 >= d1 {
                continue;
            }
            let ratio = (d1 / d0).ln();
            for i in 0..per_end {
                let d = d0 * (ratio * i as f64 / (per_end - 1) as f64).exp();
                pts.push(end + dir * d);
            }
        }
    }
    pts.retain(|x| *x >= lo && *x <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * a.abs().max(1e-300));
    pts
}

/// Start of the sign-stable power-law tail of `f` beyond `anchor` in the
/// direction `dir`, times a safety factor of 10 (measured from the anchor).
///
/// `f` is sampled at `anchor + dir · 2^m`; the tail is the longest suffix of
/// samples with constant sign whose local log-log slope stays within 0.1 of
/// the outermost slope. Capped at `1e12`.
pub fn tail_radius<F: Fn(f64) -> f64>(f: F, anchor: f64, dir: f64) -> f64 {
    const CAP: f64 = 1e12;
    let mut hs = Vec::new();
    let mut d = 1.0;
    while d <= CAP {
        hs.push(anchor + dir * d);
        d *= 2.0;
    }
    let vals: Vec<f64> = hs.iter().map(|&h| f(h)).collect();
    let n = vals.len();
    let sgn = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
    let slope = |i: usize| (vals[i + 1].abs().ln() - vals[i].abs().ln()) / std::f64::consts::LN_2;
    let last = slope(n - 2);
    let mut start = n - 2;
    let final_sign = sgn(vals[n - 1]);
    if final_sign == 0 || !last.is_finite() {
        log::debug!("tail analysis inconclusive; using cap {CAP}");
        return anchor + dir * CAP;
    }
    while start > 0 {
        let i = start - 1;
        let s = slope(i);
        if sgn(vals[i]) != final_sign || !s.is_finite() || (s - last).abs() > 0.1 {
            break;
        }
        start = i;
    }
    let radius = ((hs[start] - anchor).abs() * 10.0).min(CAP);
    log::debug!("tail radius from {anchor} in direction {dir}: {radius}");
    anchor + dir * radius
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Zero {
    pub h: f64,
    pub residual: f64,
    pub simple: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroReport {
    /// The interval actually scanned (after truncation).
    pub interval: (f64, f64),
    pub zeros: Vec<Zero>,
    pub count: usize,
    /// Local minima of `|f|` below threshold without a sign change.
    pub tangencies: Vec<f64>,
    pub identically_zero: bool,
    /// Zero counts on the successive grid refinements.
    pub pass_counts: Vec<usize>,
    pub bound: Option<u32>,
    pub bound_source: Option<String>,
}

/// Relative threshold for residuals and tangency flags.
pub const ZERO_TOL: f64 = 1e-10;

fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c).abs(), f(d).abs());
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c).abs();
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d).abs();
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

struct Scan {
    zeros: Vec<Zero>,
    tangencies: Vec<f64>,
    all_zero: bool,
}

fn scan<F: Fn(f64) -> f64>(f: &F, grid: &[f64]) -> Scan {
    let vals: Vec<f64> = grid.iter().map(|&h| f(h)).collect();
    let all_zero = vals.iter().all(|v| *v == 0.0);
    let mut zeros = Vec::new();
    let mut tangencies = Vec::new();
    if all_zero {
        return Scan {
            zeros,
            tangencies,
            all_zero,
        };
    }
    let window = 16usize;
    let local_scale = |i: usize| {
        let a = i.saturating_sub(window);
        let b = (i + window).min(vals.len() - 1);
        vals[a..=b].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    for i in 0..grid.len() - 1 {
        let (a, b) = (vals[i], vals[i + 1]);
        if a == 0.0 {
            let left = if i > 0 { vals[i - 1] } else { 0.0 };
            zeros.push(Zero {
                h: grid[i],
                residual: 0.0,
                simple: left * b < 0.0,
            });
            continue;
        }
        if a * b < 0.0 {
            let z = bisect(f, grid[i], grid[i + 1], a);
            zeros.push(Zero {
                h: z,
                residual: f(z),
                simple: true,
            });
        }
    }
    for i in 1..grid.len() - 1 {
        let (l, m, r) = (vals[i - 1], vals[i], vals[i + 1]);
        if m == 0.0 || l * m <= 0.0 || m * r <= 0.0 {
            continue;
        }
        if m.abs() < l.abs() && m.abs() <= r.abs() {
            let (hmin, fmin) = golden_min(f, grid[i - 1], grid[i + 1]);
            if fmin <= ZERO_TOL * local_scale(i) {
                tangencies.push(hmin);
            }
        }
    }
    Scan {
        zeros,
        tangencies,
        all_zero,
    }
}

/// Counts sign-change zeros of `f` on `interval`. Infinite ends are first
/// truncated with [`tail_radius`]. The scan runs at `grid`, `2·grid` and
/// `4·grid` points; the finest pass is reported.
pub fn count_zeros<F: Fn(f64) -> f64>(f: F, interval: (f64, f64), grid: usize) -> Result<ZeroReport> {
    if grid < 2 {
        return Err(Error::InvalidArgument("zero-counting grid needs at least 2 points".into()));
    }
    let (mut lo, mut hi) = interval;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty interval ({lo}, {hi})")));
    }
    if lo.is_infinite() && hi.is_infinite() {
        return Err(Error::InvalidArgument("interval must have a finite end".into()));
    }
    if hi.is_infinite() {
        hi = tail_radius(&f, lo, 1.0);
    }
    if lo.is_infinite() {
        lo = tail_radius(&f, hi, -1.0);
    }
    // stay clear of the end points themselves
    let pad = |x: f64| 1e-9 * x.abs().max(1.0);
    let (a, b) = (lo + pad(lo), hi - pad(hi));
    let mut pass_counts = Vec::new();
    let mut last = None;
    for mult in [1usize, 2, 4] {
        let g = sample_grid(a, b, grid * mult);
        let s = scan(&f, &g);
        pass_counts.push(s.zeros.len());
        last = Some(s);
    }
    let s = last.expect("three passes");
    Ok(ZeroReport {
        interval: (lo, hi),
        count: s.zeros.len(),
        zeros: s.zeros,
        tangencies: s.tangencies,
        identically_zero: s.all_zero,
        pass_counts,
        bound: None,
        bound_source: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_has_one_simple_zero() {
        let r = count_zeros(|h| h, (-1.0, 1.0), 64).unwrap();
        assert_eq!(r.count, 1);
        assert!(r.zeros[0].h.abs() < 1e-12 && r.zeros[0].simple);
    }

    #[test]
    fn double_root_is_flagged_not_counted() {
        let r = count_zeros(|h| (h - 0.5) * (h - 0.5), (0.0, 1.0), 2048).unwrap();
        assert_eq!(r.count, 0);
        assert_eq!(r.tangencies.len(), 1);
        assert!((r.tangencies[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_tangent_minimum_is_not_flagged() {
        let r = count_zeros(|h| (h - 0.5) * (h - 0.5) + 0.01, (0.0, 1.0), 256).unwrap();
        assert!(r.tangencies.is_empty() && r.count == 0);
    }

    #[test]
    fn tail_truncation_finds_far_zero() {
        // h^2 - 1e6 h changes sign at 1e6
        let r = count_zeros(|h| h * h - 1e6 * h, (0.0, f64::INFINITY), 2048).unwrap();
        assert_eq!(r.count, 1);
        assert!((r.zeros[0].h - 1e6).abs() < 1e-3);
        assert!(r.interval.1 > 1e6);
    }

    #[test]
    fn identically_zero_is_reported() {
        let r = count_zeros(|_| 0.0, (0.0, 1.0), 16).unwrap();
        assert!(r.identically_zero && r.count == 0);
    }

    #[test]
    fn rejects_tiny_grid() {
        assert!(count_zeros(|h| h, (0.0, 1.0), 1).is_err());
    }
}
