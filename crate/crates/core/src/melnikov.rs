//! The Melnikov function: closed form for quadratic perturbations of S1 and
//! S2, evaluation for any degree through the reducer, zero counting against
//! the known ceilings, and synthesis of perturbations with the maximal
//! number of simple zeros.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::{q_from_f64, q_to_f64, PolyRat};
use crate::reduction::{melnikov_rho, BasisCombo, BasisId, CompiledCombo, IntegralIndex, Reducer};
use crate::symfield::{basis_family, ClosedBasis, FieldElem, Monomial};
use crate::systems::{Annulus, Branch, Part, Perturbation, SystemKind, SystemSpec};
use crate::zeros::{count_zeros, ZeroReport};

/// Default zero-counting grid per annulus.
pub const DEFAULT_GRID: usize = 2048;

/// Coefficients of `M` on the Chebyshev family of one annulus.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct KVector {
    pub kind: SystemKind,
    pub branch: Branch,
    pub k: Vec<f64>,
    /// `I00 = c1·S`, `I-1,1 = c2·(h² + h)` for S1; `I01 = c1·h`,
    /// `I10 = c2·sqrt(h)` for S2.
    pub c1: f64,
    pub c2: f64,
}

fn require_quadratic(sys: &SystemSpec, pert: &Perturbation) -> Result<()> {
    if !matches!(sys.kind, SystemKind::S1 | SystemKind::S2) {
        return Err(Error::Unsupported(format!(
            "closed-form k coefficients exist for s1 and s2 only, not {}",
            sys.kind
        )));
    }
    if pert.n > 2 {
        return Err(Error::InvalidPerturbation(format!(
            "closed-form k coefficients need degree at most 2, got {}",
            pert.n
        )));
    }
    pert.validate()
}

/// The constants `(c1, c2)` of the k-map, fitted by quadrature.
pub fn fitted_constants(sys: &SystemSpec, branch: Branch) -> Result<(f64, f64)> {
    let cb = ClosedBasis::fit_default(sys, branch)?;
    Ok(match sys.kind {
        SystemKind::S1 => (cb.constants[&BasisId::I00], cb.constants[&BasisId::Im11]),
        SystemKind::S2 => (cb.constants[&BasisId::I01], cb.constants[&BasisId::I10]),
        _ => {
            return Err(Error::Unsupported(format!("no k-map for {}", sys.kind)));
        }
    })
}

/// Linear map from a perturbation of degree `<= 2` to its k-vector.
pub fn k_map(sys: &SystemSpec, branch: Branch, pert: &Perturbation) -> Result<KVector> {
    require_quadratic(sys, pert)?;
    let (c1, c2) = fitted_constants(sys, branch)?;
    Ok(k_map_with(sys.kind, branch, c1, c2, pert))
}

/// [`k_map`] with given constants.
pub fn k_map_with(kind: SystemKind, branch: Branch, c1: f64, c2: f64, pert: &Perturbation) -> KVector {
    use Part::*;
    let g = |p, i, j| pert.get(p, i, j);
    // sums and differences of the upper and lower coefficients
    let a_s = |i, j| g(APlus, i, j) + g(AMinus, i, j);
    let a_d = |i, j| g(APlus, i, j) - g(AMinus, i, j);
    let b_s = |i, j| g(BPlus, i, j) + g(BMinus, i, j);
    let b_d = |i, j| g(BPlus, i, j) - g(BMinus, i, j);
    let k = match kind {
        SystemKind::S1 => {
            let k0 = if branch == Branch::Negative {
                c2 * (b_s(0, 1) - b_s(1, 1) - a_s(1, 0) - a_s(0, 2))
            } else {
                c2 * (b_s(0, 1) + b_s(1, 1) - a_s(1, 0) + a_s(0, 2))
            };
            vec![
                k0,
                c1 * (b_d(0, 0) + b_d(2, 0)),
                -c2 * (2.0 * a_s(0, 0) + a_s(0, 2)),
                0.5 * c1 * b_d(1, 0),
                0.5 * c1 * a_d(0, 1),
                c1 * (b_d(0, 2) - 0.5 * a_d(1, 1)),
            ]
        }
        _ => vec![
            c2 * (b_d(0, 0) + b_d(1, 0)),
            c1 * (b_s(0, 1) - 3.0 * a_s(0, 0) - 2.0 * a_s(1, 0) + 2.0 * a_s(0, 2)),
            -2.0 * c2 * a_d(0, 1),
            2.0 * c1 * (b_s(1, 1) - a_s(2, 0)),
            -4.0 * c1 * a_s(0, 2),
            2.0 * c2 * (b_d(0, 2) - a_d(1, 1)),
            0.5 * c2 * b_d(2, 0),
        ],
    };
    KVector {
        kind,
        branch,
        k,
        c1,
        c2,
    }
}

/// `sum k_i f_i` on the family of the k-vector's annulus.
pub fn melnikov_closed(kv: &KVector) -> FieldElem {
    let fam = basis_family(kv.kind, kv.branch);
    fam.iter()
        .zip(&kv.k)
        .fold(FieldElem::zero(kv.kind), |acc, (f, &k)| acc.add(&f.scale_q(q_from_f64(k))))
}

/// The free coordinates on which the k-map is inverted, as
/// `(part, i, j)`; all other coefficients are set to zero.
pub fn free_coordinates(kind: SystemKind) -> Vec<(Part, u32, u32)> {
    use Part::*;
    match kind {
        SystemKind::S1 => vec![(APlus, 1, 0), (BPlus, 0, 0), (APlus, 0, 0), (BPlus, 1, 0), (APlus, 0, 1), (BPlus, 0, 2)],
        _ => vec![
            (BPlus, 0, 0),
            (BPlus, 0, 1),
            (APlus, 0, 1),
            (BPlus, 1, 1),
            (APlus, 0, 2),
            (BPlus, 0, 2),
            (BPlus, 2, 0),
        ],
    }
}

/// Matrix of the k-map restricted to [`free_coordinates`].
pub fn k_jacobian(kind: SystemKind, branch: Branch, c1: f64, c2: f64) -> DMatrix<f64> {
    let coords = free_coordinates(kind);
    let m = coords.len();
    let mut jac = DMatrix::zeros(m, m);
    for (col, &(part, i, j)) in coords.iter().enumerate() {
        let mut p = Perturbation::zero(2);
        p.set(part, i, j, 1.0).expect("quadratic index");
        let kv = k_map_with(kind, branch, c1, c2, &p);
        for row in 0..m {
            jac[(row, col)] = kv.k[row];
        }
    }
    jac
}

/// Reduced images of every integral a degree-`n` perturbation can produce,
/// plus the fitted closed forms; shared across many perturbations.
pub struct MelnikovContext {
    sys: SystemSpec,
    n: u32,
    table: BTreeMap<IntegralIndex, BasisCombo>,
    closed: Arc<Vec<(Annulus, ClosedBasis)>>,
}

impl MelnikovContext {
    pub fn new(sys: &SystemSpec, n: u32) -> Result<Self> {
        // b_{i,j} lands on (i, j) and a_{i,j} on (i - 1, j + 1)
        let mut red = Reducer::new(sys);
        let mut table = BTreeMap::new();
        for d in 0..=n {
            for i in 0..=d {
                let j = d - i;
                for idx in [IntegralIndex::new(i as i32, j), IntegralIndex::new(i as i32 - 1, j + 1)] {
                    if let std::collections::btree_map::Entry::Vacant(e) = table.entry(idx) {
                        e.insert(red.reduce(idx)?);
                    }
                }
            }
        }
        let closed = sys
            .sigma
            .iter()
            .map(|a| Ok((a.clone(), ClosedBasis::fit_default(sys, a.branch)?)))
            .collect::<Result<_>>()?;
        Ok(MelnikovContext {
            sys: sys.clone(),
            n,
            table,
            closed: Arc::new(closed),
        })
    }

    pub fn combo(&self, pert: &Perturbation) -> Result<BasisCombo> {
        if pert.n > self.n {
            return Err(Error::InvalidPerturbation(format!(
                "degree {} exceeds the context degree {}",
                pert.n, self.n
            )));
        }
        let mut acc = BasisCombo::zero(self.sys.kind);
        for (idx, r) in melnikov_rho(&self.sys, pert)? {
            acc.add_scaled(&self.table[&idx], &PolyRat::constant(r));
        }
        Ok(acc)
    }

    /// `M` on one annulus as a field element: exact reduction coefficients
    /// times the fitted closed forms.
    pub fn closed_form(&self, pert: &Perturbation, branch: Branch) -> Result<FieldElem> {
        let combo = self.combo(pert)?;
        let cb = &self
            .closed
            .iter()
            .find(|(a, _)| a.branch == branch)
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no {branch} annulus", self.sys.kind)))?
            .1;
        let kind = self.sys.kind;
        let mut acc = FieldElem::zero(kind);
        for (id, c) in &combo.terms {
            let scale = c.scale(&q_from_f64(cb.constants[id]));
            acc = acc.add(&cb.shape(*id).scale(&scale));
        }
        if !combo.log.is_zero() {
            acc = acc.add(&FieldElem::log(kind).scale(&combo.log));
        }
        Ok(acc)
    }

    pub fn function(&self, pert: &Perturbation) -> Result<MelnikovFunction> {
        let combo = self.combo(pert)?;
        Ok(MelnikovFunction {
            zero: combo.is_zero(),
            combo: combo.compile(),
            closed: Arc::clone(&self.closed),
        })
    }
}

/// `M(h)` for any degree: the reduced combination evaluated on the fitted
/// closed forms of the basis integrals.
pub struct MelnikovFunction {
    combo: CompiledCombo,
    zero: bool,
    closed: Arc<Vec<(Annulus, ClosedBasis)>>,
}

impl MelnikovFunction {
    pub fn new(sys: &SystemSpec, pert: &Perturbation) -> Result<Self> {
        MelnikovContext::new(sys, pert.n)?.function(pert)
    }

    pub fn is_identically_zero(&self) -> bool {
        self.zero
    }

    fn basis_at(&self, h: f64) -> Option<&ClosedBasis> {
        self.closed.iter().find(|(a, _)| a.contains(h)).map(|(_, c)| c)
    }

    /// `NaN` outside the period annuli.
    pub fn evaluate(&self, h: f64) -> f64 {
        match self.basis_at(h) {
            Some(cb) => self.combo.evaluate(h, &cb.values(h)),
            None => f64::NAN,
        }
    }

    pub fn annuli(&self) -> Vec<Annulus> {
        self.closed.iter().map(|(a, _)| a.clone()).collect()
    }

    /// Zero reports on every annulus.
    pub fn zeros(&self, grid: usize) -> Result<Vec<ZeroReport>> {
        self.annuli()
            .iter()
            .map(|a| {
                let mut r = count_zeros(|h| self.evaluate(h), (a.lo, a.hi), grid)?;
                if self.zero {
                    r.identically_zero = true;
                    r.zeros.clear();
                    r.count = 0;
                    r.tangencies.clear();
                }
                Ok(r)
            })
            .collect()
    }
}

/// Ceiling on the number of zeros of `M` for degree `n` perturbations.
pub fn bound_for(kind: SystemKind, n: i64, smooth: bool) -> Result<u32> {
    if n < 0 {
        return Err(Error::InvalidArgument(format!("degree must be non-negative, got {n}")));
    }
    let n = n as u32;
    Ok(match (kind, smooth) {
        (SystemKind::S1, false) => 4 * n + 30,
        (SystemKind::S2, false) => {
            if n >= 1 {
                10 * n - 4
            } else {
                2
            }
        }
        (SystemKind::R19, false) => {
            if n >= 4 {
                4 * n - 3
            } else {
                11
            }
        }
        (SystemKind::R20, false) => {
            if n >= 3 {
                4 * n + 3
            } else {
                8
            }
        }
        (SystemKind::S1, true) => 2 * n,
        (SystemKind::S2, true) => {
            if n >= 1 {
                2 * n - 1
            } else {
                1
            }
        }
        (SystemKind::R19, true) => {
            if n >= 4 {
                2 * n - 3
            } else {
                4
            }
        }
        (SystemKind::R20, true) => {
            if n >= 3 {
                2 * n
            } else {
                3
            }
        }
    })
}

fn bound_source(kind: SystemKind, smooth: bool) -> String {
    let which = if smooth { "smooth" } else { "discontinuous" };
    format!("{which} ceiling for {kind}")
}

/// Zero reports of `M` on every annulus, each tagged with the ceiling.
pub fn melnikov_zeros(sys: &SystemSpec, pert: &Perturbation, grid: usize) -> Result<Vec<ZeroReport>> {
    let m = MelnikovFunction::new(sys, pert)?;
    tag_reports(sys.kind, pert, m.zeros(grid)?)
}

fn tag_reports(kind: SystemKind, pert: &Perturbation, mut reports: Vec<ZeroReport>) -> Result<Vec<ZeroReport>> {
    let smooth = pert.is_smooth();
    let bound = bound_for(kind, pert.n as i64, smooth)?;
    for r in &mut reports {
        r.bound = Some(bound);
        r.bound_source = Some(bound_source(kind, smooth));
    }
    Ok(reports)
}

/// Coordinates of a field element on a Chebyshev family.
#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub k: Vec<f64>,
    /// Relative size of the part of the element outside the family span.
    pub residual: f64,
}

/// Energies where the monomial coefficients are sampled; clear of every
/// pole of the reduction.
const SAMPLE_H: [f64; 6] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0];

/// Solves `e = sum k_i f_i` monomial by monomial, sampling the rational
/// coefficients exactly at a few energies and solving by least squares.
pub fn decompose_on_family(e: &FieldElem, branch: Branch) -> Result<Decomposition> {
    let fam = basis_family(e.kind(), branch);
    let mut monomials: Vec<Monomial> = e.terms().keys().copied().collect();
    for f in &fam {
        monomials.extend(f.terms().keys().copied());
    }
    monomials.sort();
    monomials.dedup();
    let hs: Vec<f64> = match e.kind() {
        // keep S2 samples inside (0, 1), away from its poles
        SystemKind::S2 => vec![0.2, 0.3, 0.45, 0.55, 0.7, 0.8],
        _ => SAMPLE_H.to_vec(),
    };
    let coeff = |x: &FieldElem, m: &Monomial, h: f64| -> f64 {
        x.terms()
            .get(m)
            .and_then(|c| c.eval(&q_from_f64(h)))
            .map(|v| q_to_f64(&v))
            .unwrap_or(0.0)
    };
    let rows = monomials.len() * hs.len();
    let a = DMatrix::from_fn(rows, fam.len(), |r, c| coeff(&fam[c], &monomials[r / hs.len()], hs[r % hs.len()]));
    let b = DVector::from_fn(rows, |r, _| coeff(e, &monomials[r / hs.len()], hs[r % hs.len()]));
    let norms: Vec<f64> = (0..fam.len()).map(|c| a.column(c).norm().max(f64::MIN_POSITIVE)).collect();
    let scaled = DMatrix::from_fn(rows, fam.len(), |r, c| a[(r, c)] / norms[c]);
    let x = scaled
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|err| Error::Numerical(format!("family decomposition failed: {err}")))?;
    let fit = &scaled * &x;
    let bnorm = b.norm();
    let residual = if bnorm == 0.0 { 0.0 } else { (fit - &b).norm() / bnorm };
    Ok(Decomposition {
        k: (0..fam.len()).map(|c| x[c] / norms[c]).collect(),
        residual,
    })
}

/// k-vector of `M` read off its closed form; an independent route to
/// [`k_map`] through the reducer.
pub fn decompose_k(sys: &SystemSpec, branch: Branch, pert: &Perturbation) -> Result<Decomposition> {
    require_quadratic(sys, pert)?;
    let ctx = MelnikovContext::new(sys, pert.n)?;
    decompose_on_family(&ctx.closed_form(pert, branch)?, branch)
}

/// A perturbation whose `M` has the requested simple zeros.
#[derive(Clone, Debug, Serialize)]
pub struct Realization {
    pub pert: serde_json::Value,
    #[serde(skip)]
    pub perturbation: Perturbation,
    pub k: KVector,
    pub zeros: ZeroReport,
}

/// Tolerance on the distance between realized zeros and targets.
pub const TARGET_TOL: f64 = 1e-8;

pub fn realize_max(sys: &SystemSpec, targets: &[f64]) -> Result<Realization> {
    if !matches!(sys.kind, SystemKind::S1 | SystemKind::S2) {
        return Err(Error::Unsupported(format!("realize_max supports s1 and s2, not {}", sys.kind)));
    }
    let want = basis_family(sys.kind, Branch::Main).len() - 1;
    if targets.len() != want {
        return Err(Error::InvalidArgument(format!(
            "{} needs exactly {want} targets, got {}",
            sys.kind,
            targets.len()
        )));
    }
    let mut t = targets.to_vec();
    t.sort_by(f64::total_cmp);
    if t.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("targets must be distinct".into()));
    }
    let ann = sys.annulus_of(t[0])?.clone();
    for &x in &t {
        if !ann.contains(x) {
            return Err(Error::InvalidArgument(format!("targets must share one annulus; {x} does not")));
        }
        ann.check(x)?;
    }
    let fam = basis_family(sys.kind, ann.branch);
    let m = fam.len();
    // kernel of the (m-1) x m collocation matrix, padded to square
    let mut a = DMatrix::zeros(m, m);
    for (r, &h) in t.iter().enumerate() {
        for c in 0..m {
            a[(r, c)] = fam[c].evaluate(h);
        }
    }
    let norms: Vec<f64> = (0..m).map(|c| a.column(c).norm().max(f64::MIN_POSITIVE)).collect();
    for c in 0..m {
        for r in 0..m {
            a[(r, c)] /= norms[c];
        }
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| sv[x].total_cmp(&sv[y]));
    let smax = sv[order[m - 1]];
    // the padded zero row contributes one exact zero singular value
    if sv[order[1]] <= 1e-13 * smax {
        return Err(Error::Degenerate(format!(
            "collocation kernel has dimension above one (singular values {:?})",
            sv.as_slice()
        )));
    }
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let kernel: Vec<f64> = (0..m).map(|c| v_t[(order[0], c)] / norms[c]).collect();
    let kmax = kernel.iter().fold(0.0f64, |x, v| x.max(v.abs()));
    let kvals: Vec<f64> = kernel.iter().map(|v| v / kmax).collect();

    let (c1, c2) = fitted_constants(sys, ann.branch)?;
    let jac = k_jacobian(sys.kind, ann.branch, c1, c2);
    let coords = free_coordinates(sys.kind);
    let x = jac
        .clone()
        .lu()
        .solve(&DVector::from_column_slice(&kvals))
        .ok_or_else(|| Error::Degenerate("k-map Jacobian is singular".into()))?;
    let mut pert = Perturbation::zero(2);
    for (idx, &(part, i, j)) in coords.iter().enumerate() {
        pert.set(part, i, j, x[idx])?;
    }
    let kv = k_map_with(sys.kind, ann.branch, c1, c2, &pert);

    let closed = melnikov_closed(&kv);
    let report = count_zeros(|h| closed.evaluate(h), (ann.lo, ann.hi), DEFAULT_GRID)?;
    let matched = report.count == t.len()
        && report.tangencies.is_empty()
        && report.zeros.iter().all(|z| z.simple)
        && report.zeros.iter().zip(&t).all(|(z, &x)| (z.h - x).abs() <= TARGET_TOL);
    if !matched {
        return Err(Error::Degenerate(format!(
            "realized M has zeros {:?} (tangencies {:?}) instead of {:?}",
            report.zeros.iter().map(|z| z.h).collect::<Vec<_>>(),
            report.tangencies,
            t
        )));
    }
    Ok(Realization {
        pert: pert.to_json(),
        perturbation: pert,
        k: kv,
        zeros: report,
    })
}

/// Summary of a randomized ceiling audit.
#[derive(Clone, Debug, Serialize)]
pub struct AuditRow {
    pub system: SystemKind,
    pub n: u32,
    pub smooth: bool,
    pub trials: usize,
    pub bound: u32,
    pub max_count: usize,
    pub violations: usize,
    /// Largest `|k_i|/max|k|` over the components that vanish for smooth
    /// quadratic S1 perturbations (S1, `n = 2`, smooth only).
    pub smooth_residual: Option<f64>,
}

/// Counts zeros of `M` for `trials` seeded random perturbations.
pub fn audit(sys: &SystemSpec, n: u32, smooth: bool, trials: usize, seed: u64, grid: usize) -> Result<AuditRow> {
    let bound = bound_for(sys.kind, n as i64, smooth)?;
    let ctx = MelnikovContext::new(sys, n)?;
    let counts: Vec<(usize, Option<f64>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((t as u64) << 20) ^ ((n as u64) << 8) ^ smooth as u64);
            let pert = Perturbation::random(n, smooth, &mut rng);
            let count = ctx.function(&pert)?.zeros(grid)?.iter().map(|r| r.count).sum();
            let resid = if smooth && n == 2 && sys.kind == SystemKind::S1 {
                let mut worst = 0.0f64;
                for a in &sys.sigma {
                    let k = decompose_on_family(&ctx.closed_form(&pert, a.branch)?, a.branch)?.k;
                    let kmax = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    for i in [1, 3, 4, 5] {
                        worst = worst.max(k[i].abs() / kmax);
                    }
                }
                Some(worst)
            } else {
                None
            };
            Ok((count, resid))
        })
        .collect::<Result<_>>()?;
    Ok(AuditRow {
        system: sys.kind,
        n,
        smooth,
        trials,
        bound,
        max_count: counts.iter().map(|c| c.0).max().unwrap_or(0),
        violations: counts.iter().filter(|c| c.0 > bound as usize).count(),
        smooth_residual: counts.iter().filter_map(|c| c.1).reduce(f64::max),
    })
}
