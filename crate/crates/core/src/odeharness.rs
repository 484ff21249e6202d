//! Direct simulation of the switching systems: adaptive Dormand–Prince
//! integration, crossings of the section `y = 0`, return maps and
//! limit-cycle detection.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::oval_endpoints;
use crate::systems::{Branch, Side, SystemKind, SystemSpec};
use crate::systems::Perturbation;

/// Largest perturbation size accepted by the simulator.
pub const MAX_EPS: f64 = 1e-2;

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Bounding box half-width as a multiple of the unperturbed oval extent.
    pub box_factor: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-14,
            abs_tol: 1e-16,
            max_steps: 500_000,
            box_factor: 10.0,
        }
    }
}

type State = [f64; 2];

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step; returns the 5th-order state and the error
/// estimate.
fn dp_step<F: Fn(State) -> State>(f: &F, y: State, dt: f64) -> (State, State) {
    let mut k = [[0.0; 2]; 7];
    for s in 0..7 {
        let mut ys = y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for d in 0..2 {
                ys[d] += dt * A[s][j] * kj[d];
            }
        }
        debug_assert!(C[s] >= 0.0);
        k[s] = f(ys);
    }
    let mut y5 = y;
    let mut err = [0.0; 2];
    for s in 0..7 {
        for d in 0..2 {
            y5[d] += dt * B5[s] * k[s][d];
            err[d] += dt * (B5[s] - B4[s]) * k[s][d];
        }
    }
    (y5, err)
}

fn error_norm(err: &State, y0: &State, y1: &State, opts: &OdeOptions) -> f64 {
    let mut m = 0.0f64;
    for d in 0..2 {
        let sc = opts.abs_tol + opts.rel_tol * y0[d].abs().max(y1[d].abs());
        m = m.max((err[d] / sc).abs());
    }
    m
}

/// Bounding box of the unperturbed oval through `(x0, 0)`, scaled.
fn bounding_box(sys: &SystemSpec, x0: f64, factor: f64) -> Result<f64> {
    let h0 = sys.hamiltonian(x0, 0.0)?;
    let geo = oval_endpoints(sys, h0)?;
    let n = 64;
    let ymax = (1..n)
        .map(|i| geo.point(sys, std::f64::consts::FRAC_PI_2 * i as f64 / n as f64).y.abs())
        .fold(0.0f64, f64::max);
    let extent = geo.x1.abs().max(geo.x2.abs()).max(ymax);
    Ok(factor * extent)
}

fn side_sign(side: Side) -> f64 {
    match side {
        Side::Upper => 1.0,
        Side::Lower => -1.0,
    }
}

/// Integrates the `side` field from `(x0, 0)` to its next crossing of
/// `y = 0` and returns the crossing abscissa.
pub fn half_return(sys: &SystemSpec, pert: &Perturbation, eps: f64, x0: f64, side: Side) -> Result<f64> {
    Ok(half_return_with(sys, pert, eps, x0, side, &OdeOptions::default())?.x)
}

/// State at a located crossing of the section.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Crossing {
    pub x: f64,
    /// Residual height, `|y| <= 1e-12`.
    pub y: f64,
    /// Vertical speed of the integrated field there.
    pub dydt: f64,
}

pub fn half_return_with(
    sys: &SystemSpec,
    pert: &Perturbation,
    eps: f64,
    x0: f64,
    side: Side,
    opts: &OdeOptions,
) -> Result<Crossing> {
    if !(eps.abs() <= MAX_EPS) {
        return Err(Error::InvalidArgument(format!("|eps| = {eps} exceeds {MAX_EPS}")));
    }
    let h0 = sys.hamiltonian(x0, 0.0)?;
    sys.annulus_of(h0)?;
    let sgn = side_sign(side);
    let field = |s: State| -> State {
        let (u, v) = sys.vector_field(side, eps, pert, s[0], s[1]);
        [u, v]
    };
    let v0 = field([x0, 0.0])[1];
    if v0 * sgn <= 0.0 {
        return Err(Error::Integration(format!(
            "the {side:?} field does not leave the section at x = {x0} (dy/dt = {v0:e}); sliding is not modelled"
        )));
    }
    let bbox = bounding_box(sys, x0, opts.box_factor)?;
    let mut y: State = [x0, 0.0];
    // rough time scale from the initial speed
    let mut dt = 1e-3 * bbox / field(y)[0].hypot(v0).max(1e-300);
    for _ in 0..opts.max_steps {
        let (y1, err) = dp_step(&field, y, dt);
        let en = error_norm(&err, &y, &y1, opts);
        if !en.is_finite() {
            dt *= 0.25;
            continue;
        }
        if en <= 1.0 {
            if y1[1] * sgn < 0.0 || (y1[1] == 0.0 && y[1] != 0.0) {
                return locate_crossing(&field, y, dt, sgn, bbox);
            }
            y = y1;
            if y[0].abs() > bbox || y[1].abs() > bbox {
                return Err(Error::Integration(format!(
                    "trajectory from x = {x0} left the box of half-width {bbox:e}"
                )));
            }
        }
        let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        dt *= fac;
    }
    Err(Error::Integration(format!(
        "no crossing of y = 0 from x = {x0} within {} steps",
        opts.max_steps
    )))
}

/// Finds `tau` in `(0, dt]` where the step from `y` reaches `y = 0`, by
/// safeguarded secant iteration on re-taken steps.
fn locate_crossing<F: Fn(State) -> State>(field: &F, y: State, dt: f64, sgn: f64, bbox: f64) -> Result<Crossing> {
    let at = |tau: f64| dp_step(field, y, tau).0;
    let (mut a, mut ya) = (0.0, y[1] * sgn);
    let (mut b, mut yb) = (dt, at(dt)[1] * sgn);
    let mut side = 0i8;
    let mut best = at(dt);
    for _ in 0..200 {
        // Illinois variant of regula falsi
        let mut t = b - yb * (b - a) / (yb - ya);
        if !(t > a.min(b) && t < a.max(b)) {
            t = 0.5 * (a + b);
        }
        let s = at(t);
        best = s;
        let ys = s[1] * sgn;
        if ys.abs() <= 1e-13 * bbox.min(1.0) || (b - a).abs() <= 1e-16 * dt {
            break;
        }
        if ys > 0.0 {
            a = t;
            ya = ys;
            if side == -1 {
                yb *= 0.5;
            }
            side = -1;
        } else {
            b = t;
            yb = ys;
            if side == 1 {
                ya *= 0.5;
            }
            side = 1;
        }
    }
    if best[1].abs() > 1e-12 {
        return Err(Error::Integration(format!(
            "crossing located only to |y| = {:e}",
            best[1].abs()
        )));
    }
    let vy = field(best)[1];
    if vy.abs() <= 1e-12 {
        return Err(Error::Integration(format!(
            "tangential contact with y = 0 at x = {}",
            best[0]
        )));
    }
    Ok(Crossing {
        x: best[0],
        y: best[1],
        dydt: vy,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReturnMapSample {
    pub x0: f64,
    pub x_ret: f64,
    pub displacement: f64,
    pub h0: f64,
}

/// Side of the centre from which orbits enter the upper half-plane.
pub fn start_on_left(sys: &SystemSpec, branch: Branch) -> bool {
    match sys.kind {
        SystemKind::S1 => branch == Branch::Main,
        SystemKind::S2 => true,
        SystemKind::R19 | SystemKind::R20 => false,
    }
}

/// Section abscissa of the level `h` on the start side.
pub fn section_point(sys: &SystemSpec, h: f64) -> Result<f64> {
    let geo = oval_endpoints(sys, h)?;
    Ok(if start_on_left(sys, geo.branch) { geo.x1 } else { geo.x2 })
}

/// Upper then lower half-return from `(x0, 0)`.
pub fn full_return(sys: &SystemSpec, pert: &Perturbation, eps: f64, x0: f64) -> Result<ReturnMapSample> {
    let h0 = sys.hamiltonian(x0, 0.0)?;
    let mid = half_return(sys, pert, eps, x0, Side::Upper)?;
    let x_ret = half_return(sys, pert, eps, mid, Side::Lower)?;
    Ok(ReturnMapSample {
        x0,
        x_ret,
        displacement: x_ret - x0,
        h0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitCycle {
    pub x: f64,
    pub h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CycleScan {
    pub samples: Vec<ReturnMapSample>,
    pub cycles: Vec<LimitCycle>,
    /// Displacement vanishes on the whole range (a period annulus survives).
    pub degenerate: bool,
}

/// Relative displacement below which a return counts as closed; well
/// above the integration error of a full return.
pub const CLOSED_TOL: f64 = 1e-10;

/// Scans the displacement over `samples` start points in `x_range` and
/// polishes every sign change into a fixed point of the full return.
pub fn find_limit_cycles(
    sys: &SystemSpec,
    pert: &Perturbation,
    eps: f64,
    x_range: (f64, f64),
    samples: usize,
) -> Result<CycleScan> {
    let (lo, hi) = x_range;
    if !(lo < hi) || samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need lo < hi and at least 2 samples, got ({lo}, {hi}) with {samples}"
        )));
    }
    let h_lo = sys.hamiltonian(lo, 0.0)?;
    let h_hi = sys.hamiltonian(hi, 0.0)?;
    let ann = sys.annulus_of(h_lo)?;
    if !ann.contains(h_hi) || (lo - ann.center_x) * (hi - ann.center_x) <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "x range ({lo}, {hi}) must lie on one side of the centre inside one annulus"
        )));
    }
    let xs: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let samples: Vec<ReturnMapSample> = xs
        .par_iter()
        .map(|&x| full_return(sys, pert, eps, x))
        .collect::<Result<_>>()?;
    let degenerate = samples
        .iter()
        .all(|s| s.displacement.abs() <= CLOSED_TOL * s.x0.abs().max(1.0));
    if degenerate {
        return Ok(CycleScan {
            samples,
            cycles: Vec::new(),
            degenerate,
        });
    }
    let brackets: Vec<(usize, usize)> = (0..samples.len() - 1)
        .filter(|&i| samples[i].displacement * samples[i + 1].displacement <= 0.0 && samples[i].displacement != 0.0)
        .map(|i| (i, i + 1))
        .collect();
    let mut cycles: Vec<LimitCycle> = brackets
        .par_iter()
        .map(|&(i, j)| {
            let x = polish(sys, pert, eps, &samples[i], &samples[j])?;
            Ok(LimitCycle {
                x,
                h: sys.hamiltonian(x, 0.0)?,
            })
        })
        .collect::<Result<_>>()?;
    cycles.sort_by(|a, b| a.h.total_cmp(&b.h));
    Ok(CycleScan {
        samples,
        cycles,
        degenerate,
    })
}

fn polish(sys: &SystemSpec, pert: &Perturbation, eps: f64, a: &ReturnMapSample, b: &ReturnMapSample) -> Result<f64> {
    let (mut xa, mut da) = (a.x0, a.displacement);
    let (mut xb, mut db) = (b.x0, b.displacement);
    if db == 0.0 {
        return Ok(xb);
    }
    for _ in 0..100 {
        let mut x = xb - db * (xb - xa) / (db - da);
        if !(x > xa.min(xb) && x < xa.max(xb)) {
            x = 0.5 * (xa + xb);
        }
        let d = full_return(sys, pert, eps, x)?.displacement;
        if d == 0.0 || (xb - xa).abs() <= 1e-13 * x.abs().max(1e-300) {
            return Ok(x);
        }
        if (d > 0.0) == (da > 0.0) {
            xa = x;
            da = d;
            db *= 0.5;
        } else {
            xb = x;
            db = d;
            da *= 0.5;
        }
    }
    Ok(0.5 * (xa + xb))
}

/// Section range on the start side covering the energy range `(h_lo, h_hi)`.
pub fn section_range(sys: &SystemSpec, h_lo: f64, h_hi: f64) -> Result<(f64, f64)> {
    let a = section_point(sys, h_lo)?;
    let b = section_point(sys, h_hi)?;
    Ok((a.min(b), a.max(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::make_system;

    #[test]
    fn unperturbed_half_return_hits_conjugate_endpoint() {
        let sys = make_system(SystemKind::S1);
        let pert = Perturbation::zero(2);
        let geo = oval_endpoints(&sys, 1.0).unwrap();
        let x = half_return(&sys, &pert, 0.0, geo.x1, Side::Upper).unwrap();
        assert!((x - geo.x2).abs() < 1e-9 * geo.x2, "{x} vs {}", geo.x2);
    }

    #[test]
    fn unperturbed_orbits_close() {
        for kind in SystemKind::ALL {
            let sys = make_system(kind);
            for ann in &sys.sigma {
                let h = match (ann.lo.is_finite(), ann.hi.is_finite()) {
                    (true, true) => 0.5 * (ann.lo + ann.hi),
                    (true, false) => ann.lo + ann.lo.abs().max(1.0),
                    _ => ann.hi - ann.hi.abs().max(1.0),
                };
                let x0 = section_point(&sys, h).unwrap();
                let s = full_return(&sys, &Perturbation::zero(1), 0.0, x0).unwrap();
                assert!(s.displacement.abs() < 1e-9 * x0.abs().max(1.0), "{kind} {:?}: {}", ann.branch, s.displacement);
            }
        }
    }

    #[test]
    fn large_eps_is_rejected() {
        let sys = make_system(SystemKind::S2);
        assert!(half_return(&sys, &Perturbation::zero(1), 0.1, 0.8, Side::Upper).is_err());
    }
}
