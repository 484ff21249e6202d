//! Picard–Fuchs systems `V = A(h) V'` for the basis integrals, with a
//! numerical residual check against quadrature.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::{q, q_to_f64, qi, Poly, PolyRat, Q};
use crate::quadrature::{integral_i_with, QuadOptions};
use crate::reduction::BasisId;
use crate::systems::{Annulus, SystemKind, SystemSpec};

#[derive(Clone, Debug)]
pub struct PFSystem {
    pub kind: SystemKind,
    /// The integrals forming `V`, in order.
    pub basis: Vec<BasisId>,
    pub matrix: Vec<Vec<PolyRat>>,
    /// Energies where some entry of `A` has a pole.
    pub singular: Vec<Q>,
}

fn poly(c: &[Q]) -> PolyRat {
    PolyRat::from_poly(Poly::from_coeffs(c.to_vec()))
}

fn over(p: PolyRat, root: Q, lead: Q) -> PolyRat {
    let mut den = BTreeMap::new();
    den.insert(root, 1);
    &p * &PolyRat::new(Poly::constant(qi(1) / lead), den)
}

pub fn pf_system(kind: SystemKind) -> PFSystem {
    let z = PolyRat::zero;
    match kind {
        SystemKind::S1 => {
            // common factor 1/(2h+1)
            let f = |p: &[Q]| over(poly(p), q(-1, 2), qi(2));
            let sq = [q(1, 2), qi(2), qi(2)]; // (2h+1)^2 / 2
            PFSystem {
                kind,
                basis: vec![BasisId::I00, BasisId::I11, BasisId::Im11, BasisId::I02],
                matrix: vec![
                    vec![f(&[qi(0), qi(2), qi(2)]), z(), z(), z()],
                    vec![z(), f(&sq), f(&[q(-1, 2)]), z()],
                    vec![z(), z(), f(&[qi(0), qi(1), qi(1)]), z()],
                    vec![f(&[qi(0), qi(-2), qi(-2)]), z(), z(), f(&sq)],
                ],
                singular: vec![q(-1, 2)],
            }
        }
        SystemKind::S2 => {
            let h = poly(&[qi(0), qi(1)]);
            PFSystem {
                kind,
                basis: vec![BasisId::I01, BasisId::I10, BasisId::I11, BasisId::I02],
                matrix: vec![
                    vec![h.clone(), z(), z(), z()],
                    vec![z(), poly(&[qi(0), qi(2)]), z(), z()],
                    vec![poly(&[qi(2)]), z(), poly(&[qi(-2), qi(2)]), z()],
                    vec![z(), poly(&[qi(0), qi(4)]), z(), poly(&[qi(-1), qi(1)])],
                ],
                singular: vec![qi(1)],
            }
        }
        SystemKind::R19 | SystemKind::R20 => {
            let h = poly(&[qi(0), qi(1)]);
            let c = poly(&[q(-1, 64)]);
            // h - 1/(4096 h)
            let last = over(poly(&[q(-1, 4096), qi(0), qi(1)]), qi(0), qi(1));
            let basis = if kind == SystemKind::R19 {
                vec![BasisId::Ih1, BasisId::I11, BasisId::I10]
            } else {
                vec![BasisId::I01, BasisId::Ih1, BasisId::I00]
            };
            PFSystem {
                kind,
                basis,
                matrix: vec![vec![h.clone(), c.clone(), z()], vec![c, h, z()], vec![z(), z(), last]],
                singular: vec![qi(0)],
            }
        }
    }
}

/// `A(h)` as floats.
pub fn pf_matrix(sys: &SystemSpec, h: f64) -> Result<Vec<Vec<f64>>> {
    let pf = pf_system(sys.kind);
    for s in &pf.singular {
        let sf = q_to_f64(s);
        if (h - sf).abs() <= 1e-12 * sf.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "h = {h} is a singular point of the {} Picard-Fuchs matrix",
                sys.kind
            )));
        }
    }
    Ok(pf.matrix.iter().map(|row| row.iter().map(|e| e.eval_f64(h)).collect()).collect())
}

fn basis_vector(sys: &SystemSpec, h: f64, basis: &[BasisId], opts: &QuadOptions) -> Result<Vec<f64>> {
    basis.iter().map(|b| integral_i_with(sys, h, b.index(), opts)).collect()
}

/// Central-difference derivative of the basis vector, Richardson-combined
/// over steps `s` and `s/2`.
pub fn basis_derivative(sys: &SystemSpec, h: f64, step: f64, basis: &[BasisId]) -> Result<Vec<f64>> {
    let opts = QuadOptions::tight();
    let central = |s: f64| -> Result<Vec<f64>> {
        let p = basis_vector(sys, h + s, basis, &opts)?;
        let m = basis_vector(sys, h - s, basis, &opts)?;
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * s)).collect())
    };
    let d1 = central(step)?;
    let d2 = central(0.5 * step)?;
    Ok(d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect())
}

/// Step that keeps `h ± step` well inside the annulus.
pub fn default_step(sys: &SystemSpec, h: f64) -> Result<f64> {
    let ann = sys.annulus_of(h)?;
    let gap = [ann.lo, ann.hi]
        .iter()
        .filter(|b| b.is_finite())
        .map(|b| (h - b).abs())
        .fold(f64::INFINITY, f64::min);
    Ok((1e-3 * h.abs().max(1e-2)).min(0.02 * gap))
}

/// `max|V - A V'| / max|V|` at `h`.
pub fn pf_residual(sys: &SystemSpec, h: f64, step: f64) -> Result<f64> {
    let ann = sys.annulus_of(h)?;
    if !(ann.contains(h - step) && ann.contains(h + step)) || step <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step {step} leaves the annulus around h = {h}"
        )));
    }
    let pf = pf_system(sys.kind);
    let a = pf_matrix(sys, h)?;
    let v = basis_vector(sys, h, &pf.basis, &QuadOptions::tight())?;
    let dv = basis_derivative(sys, h, step, &pf.basis)?;
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        let av: f64 = row.iter().zip(&dv).map(|(x, y)| x * y).sum();
        worst = worst.max((v[i] - av).abs());
    }
    let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(worst / norm)
}

/// `n` energies across an annulus, log-spaced toward its finite ends and
/// kept at least `1e-3 · max(1, |end|)` away from them.
pub fn pf_grid(ann: &Annulus, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let frac = |i: usize| i as f64 / (n - 1) as f64;
    match (ann.lo.is_finite(), ann.hi.is_finite()) {
        (true, true) => {
            // logit-uniform in (1e-3, 1 - 1e-3)
            let (a, b) = ((1e-3f64 / (1.0 - 1e-3)).ln(), ((1.0 - 1e-3) / 1e-3f64).ln());
            (0..n)
                .map(|i| {
                    let t = 1.0 / (1.0 + (-(a + (b - a) * frac(i))).exp());
                    ann.lo + (ann.hi - ann.lo) * t
                })
                .collect()
        }
        (lo_fin, _) => {
            let (anchor, dir) = if lo_fin { (ann.lo, 1.0) } else { (ann.hi, -1.0) };
            let scale = anchor.abs().max(1.0);
            (0..n)
                .map(|i| anchor + dir * scale * 10f64.powf(-3.0 + 6.0 * frac(i)))
                .collect()
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PfRow {
    pub h: f64,
    pub residual: f64,
}

/// Residuals on [`pf_grid`] for every annulus of the system.
pub fn pf_check(sys: &SystemSpec, n: usize) -> Result<Vec<PfRow>> {
    let hs: Vec<f64> = sys.sigma.iter().flat_map(|a| pf_grid(a, n)).collect();
    let mut rows: Vec<PfRow> = hs
        .par_iter()
        .map(|&h| {
            let step = default_step(sys, h)?;
            Ok(PfRow {
                h,
                residual: pf_residual(sys, h, step)?,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.h.total_cmp(&b.h));
    Ok(rows)
}
