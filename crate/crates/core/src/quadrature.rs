//! Ground-truth numerics: oval endpoints and the generating integrals
//! `I_{i,j}(h) = ∫ x^{i-k-1} y^j dx` over the upper half-oval (x1 → x2), their
//! lower-branch twins `J_{i,j}` (x2 → x1, `y < 0`), and the Melnikov
//! function as a direct line integral.
//!
//! The substitution `x = x1 + (x2 - x1) sin²θ` turns the half-oval into
//! `θ ∈ [0, π/2]`. With it `y = (x2 - x1) sinθ cosθ · g(x)` for a smooth,
//! positive `g`, so every integrand is smooth at both ends and the square
//! root never sees a cancelled difference.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::reduction::IntegralIndex;
use crate::systems::{Branch, Perturbation, Side, SystemKind, SystemSpec};

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subintervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_subintervals: 4000,
        }
    }
}

impl QuadOptions {
    /// Tolerances near machine precision, used where values get differenced.
    pub fn tight() -> Self {
        QuadOptions {
            rel_tol: 1e-15,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub subintervals: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for (idx, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let f1 = f(c - r * x);
        let f2 = f(c + r * x);
        kron += w * (f1 + f2);
        abs += w * (f1.abs() + f2.abs());
        if idx % 2 == 1 {
            gauss += WG[idx / 2] * (f1 + f2);
        }
    }
    Segment {
        a,
        b,
        value: kron * r,
        error: ((kron - gauss) * r).abs(),
        abs: abs * r.abs(),
    }
}

/// Globally adaptive 7/15-point Gauss–Kronrod on `[a, b]` (either order).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            subintervals: 0,
        });
    }
    let mut segs = vec![gk15(&f, a, b)];
    loop {
        let value: f64 = segs.iter().map(|s| s.value).sum();
        let error: f64 = segs.iter().map(|s| s.error).sum();
        let abs: f64 = segs.iter().map(|s| s.abs).sum();
        if !value.is_finite() {
            return Err(Error::Numerical("non-finite integrand".into()));
        }
        let floor = 50.0 * f64::EPSILON * abs;
        let target = opts.abs_tol.max(opts.rel_tol * value.abs()).max(floor);
        if error <= target {
            return Ok(QuadResult {
                value,
                error,
                subintervals: segs.len(),
            });
        }
        if segs.len() >= opts.max_subintervals {
            return Err(Error::Quadrature {
                error,
                intervals: segs.len(),
            });
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap();
        let s = segs.swap_remove(worst);
        let m = 0.5 * (s.a + s.b);
        segs.push(gk15(&f, s.a, m));
        segs.push(gk15(&f, m, s.b));
    }
}

/// The x-axis crossings of the oval of energy `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct OvalGeometry {
    pub kind: SystemKind,
    pub h: f64,
    pub branch: Branch,
    pub x1: f64,
    pub x2: f64,
    // sqrt of the endpoints (half-integer systems only)
    s1: f64,
    s2: f64,
}

/// A point of the upper half-oval at parameter `θ`.
#[derive(Clone, Copy, Debug)]
pub struct OvalPoint {
    pub x: f64,
    /// `y >= 0` on the upper branch.
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
}

pub fn oval_endpoints(sys: &SystemSpec, h: f64) -> Result<OvalGeometry> {
    let branch = sys.annulus_of(h)?.branch;
    let (x1, x2, s1, s2) = match sys.kind {
        SystemKind::S1 => {
            let s = (h * h + h).sqrt();
            if branch == Branch::Main {
                let x2 = 2.0 * h + 1.0 + 2.0 * s;
                (1.0 / x2, x2, 0.0, 0.0)
            } else {
                let x1 = 2.0 * h + 1.0 - 2.0 * s;
                (x1, 1.0 / x1, 0.0, 0.0)
            }
        }
        SystemKind::S2 => {
            let u = h.sqrt();
            (1.0 / (1.0 + u), (1.0 + u) / (1.0 - h), 0.0, 0.0)
        }
        SystemKind::R19 | SystemKind::R20 => {
            let r = (4096.0 * h * h - 1.0).sqrt();
            let s2 = 64.0 * h + r;
            let s1 = 1.0 / s2;
            (s1 * s1, s2 * s2, s1, s2)
        }
    };
    if !(x1 < x2) {
        return Err(Error::Numerical(format!("failed to bracket the oval at h = {h}")));
    }
    Ok(OvalGeometry {
        kind: sys.kind,
        h,
        branch,
        x1,
        x2,
        s1,
        s2,
    })
}

impl OvalGeometry {
    /// `y / ((x2 - x1) sinθ cosθ)` at abscissa `x`.
    fn shape(&self, x: f64) -> f64 {
        match self.kind {
            SystemKind::S1 => std::f64::consts::FRAC_1_SQRT_2,
            SystemKind::S2 => (2.0 * (1.0 - self.h)).sqrt(),
            SystemKind::R19 => {
                let s = x.sqrt();
                (x / (64.0 * (s + self.s1) * (self.s2 + s))).sqrt()
            }
            SystemKind::R20 => {
                let s = x.sqrt();
                (1.0 / (64.0 * (s + self.s1) * (self.s2 + s))).sqrt()
            }
        }
    }

    pub fn point(&self, sys: &SystemSpec, theta: f64) -> OvalPoint {
        let (sn, cs) = theta.sin_cos();
        let w = self.x2 - self.x1;
        // anchor at the nearer endpoint so x keeps full relative accuracy
        // next to a small endpoint
        let x = if sn * sn <= 0.5 {
            self.x1 + w * sn * sn
        } else {
            self.x2 - w * cs * cs
        };
        let g = self.shape(x);
        let dphi = sys.half_energy_dx(self.h, x).unwrap_or(f64::NAN);
        OvalPoint {
            x,
            y: w * sn * cs * g,
            dx: 2.0 * w * sn * cs,
            dy: 2.0 * dphi / g,
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }
}

fn exponent(sys: &SystemSpec, idx: IntegralIndex) -> f64 {
    idx.i_f64() - sys.k_f64() - 1.0
}

pub fn integral_i_with(sys: &SystemSpec, h: f64, idx: IntegralIndex, opts: &QuadOptions) -> Result<f64> {
    let geo = oval_endpoints(sys, h)?;
    let p = exponent(sys, idx);
    sys.xpow(geo.x1, p)?;
    let j = idx.j as i32;
    let r = integrate(
        |t| {
            let pt = geo.point(sys, t);
            sys.xpow(pt.x, p).unwrap_or(f64::NAN) * pt.y.powi(j) * pt.dx
        },
        0.0,
        FRAC_PI_2,
        opts,
    )?;
    Ok(r.value)
}

/// `I_{i,j}(h)` over the upper half-oval traversed from x1 to x2.
pub fn integral_i(sys: &SystemSpec, h: f64, idx: IntegralIndex) -> Result<f64> {
    integral_i_with(sys, h, idx, &QuadOptions::default())
}

/// `J_{i,j}(h)` over the lower half-oval traversed from x2 to x1, computed
/// directly rather than through the parity rule.
pub fn integral_j(sys: &SystemSpec, h: f64, idx: IntegralIndex) -> Result<f64> {
    let geo = oval_endpoints(sys, h)?;
    let p = exponent(sys, idx);
    sys.xpow(geo.x1, p)?;
    let j = idx.j as i32;
    let r = integrate(
        |t| {
            let pt = geo.point(sys, t);
            sys.xpow(pt.x, p).unwrap_or(f64::NAN) * (-pt.y).powi(j) * pt.dx
        },
        FRAC_PI_2,
        0.0,
        &QuadOptions::default(),
    )?;
    Ok(r.value)
}

/// `∫ x^p y^j dy` over the upper half-oval, by direct parametrisation.
pub fn integral_dy(sys: &SystemSpec, h: f64, p: f64, j: u32) -> Result<f64> {
    let geo = oval_endpoints(sys, h)?;
    sys.xpow(geo.x1, p)?;
    let r = integrate(
        |t| {
            let pt = geo.point(sys, t);
            sys.xpow(pt.x, p).unwrap_or(f64::NAN) * pt.y.powi(j as i32) * pt.dy
        },
        0.0,
        FRAC_PI_2,
        &QuadOptions::default(),
    )?;
    Ok(r.value)
}

/// `M(h) = ∮ x^{-k-1} (g^± dx - f^± dy)`, upper half with the `+`
/// coefficients, lower half with the `-` ones.
pub fn melnikov_quadrature(sys: &SystemSpec, pert: &Perturbation, h: f64) -> Result<f64> {
    melnikov_quadrature_with(sys, pert, h, &QuadOptions::default())
}

pub fn melnikov_quadrature_with(sys: &SystemSpec, pert: &Perturbation, h: f64, opts: &QuadOptions) -> Result<f64> {
    pert.validate()?;
    let geo = oval_endpoints(sys, h)?;
    let p = -sys.k_f64() - 1.0;
    sys.xpow(geo.x1, p)?;
    let r = integrate(
        |t| {
            let pt = geo.point(sys, t);
            let w = sys.xpow(pt.x, p).unwrap_or(f64::NAN);
            let (fu, gu) = pert.eval(Side::Upper, pt.x, pt.y);
            let (fl, gl) = pert.eval(Side::Lower, pt.x, -pt.y);
            // the lower branch runs backwards in θ with dy of opposite sign
            let upper = gu * pt.dx - fu * pt.dy;
            let lower = gl * pt.dx + fl * pt.dy;
            w * (upper - lower)
        },
        0.0,
        FRAC_PI_2,
        opts,
    )?;
    Ok(r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::make_system;

    #[test]
    fn gauss_kronrod_polynomial_and_reversed() {
        let r = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((r.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
        let back = integrate(|x| x.powi(5) - 2.0 * x, 2.0, 0.0, &QuadOptions::default()).unwrap();
        assert!((back.value + r.value).abs() < 1e-13);
    }

    #[test]
    fn endpoints_are_roots() {
        for kind in SystemKind::ALL {
            let sys = make_system(kind);
            let hs: &[f64] = match kind {
                SystemKind::S1 => &[-7.0, -1.01, 0.01, 1.0, 40.0],
                SystemKind::S2 => &[0.01, 0.5, 0.99],
                _ => &[0.016, 0.05, 3.0],
            };
            for &h in hs {
                let g = oval_endpoints(&sys, h).unwrap();
                for x in [g.x1, g.x2] {
                    let scale = (h * sys.xpow(x, sys.k_f64()).unwrap()).abs().max(1e-300);
                    assert!(sys.half_energy(h, x).unwrap().abs() <= 1e-12 * scale.max(1.0));
                }
                let mid = 0.5 * (g.x1 + g.x2);
                assert!(sys.half_energy(h, mid).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn factored_height_matches_half_energy() {
        for kind in SystemKind::ALL {
            let sys = make_system(kind);
            let h = match kind {
                SystemKind::S1 => 0.7,
                SystemKind::S2 => 0.3,
                _ => 0.04,
            };
            let g = oval_endpoints(&sys, h).unwrap();
            for t in [0.2, 0.7, 1.3] {
                let pt = g.point(&sys, t);
                let phi = sys.half_energy(h, pt.x).unwrap();
                assert!((pt.y * pt.y - 2.0 * phi).abs() < 1e-12 * (2.0 * phi).max(1.0));
            }
        }
    }
}
