//! A small exact differential field per system: rational functions of `h`
//! adjoined with the system's square roots and one logarithm.
//!
//! | system   | radicals                         | logarithm                  |
//! |----------|----------------------------------|----------------------------|
//! | S1       | `S = sqrt(h^2 + h)`              | `L = ln|2S + 2h + 1|`      |
//! | S2       | `u = sqrt(h)`, `v = sqrt(1 - h)` | `L = ln((1 + u)/(1 - u))`  |
//! | r19, r20 | `S = sqrt(4096h^2 - 1)`          | `L = ln(64h + S)`          |
//!
//! Elements are kept in normal form `sum c_m(h) R^m L^e` where `R^m` is a
//! square-free product of radicals and `c_m` a [`PolyRat`]. Squares of
//! radicals fold back into the coefficients, so the form is unique.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use dashu_float::ops::SquareRoot;
use dashu_float::FBig;
use dashu_int::IBig;
use num_traits::One;
use rayon::prelude::*;

use crate::error::Result;
use crate::poly::{q, q_from_f64, q_to_f64, qi, Poly, PolyRat, Q};
use crate::quadrature::integral_i;
use crate::reduction::{basis_of, log_generator, BasisId, BasisValues};
use crate::systems::{Branch, SystemKind, SystemSpec};
use crate::zeros::{sample_grid, tail_radius};

struct Radical {
    lead: Q,
    roots: Vec<Q>,
    text: &'static str,
}

impl Radical {
    fn square(&self) -> PolyRat {
        let mut p = Poly::constant(self.lead.clone());
        for r in &self.roots {
            p = &p * &Poly::linear(r);
        }
        PolyRat::from_poly(p)
    }

    /// `r'/r = q'/(2q)`.
    fn log_derivative(&self) -> PolyRat {
        let mut acc = PolyRat::zero();
        for r in &self.roots {
            acc = &acc + &PolyRat::inv_linear(r.clone(), 1).scale(&q(1, 2));
        }
        acc
    }
}

struct Generators {
    radicals: Vec<Radical>,
    /// `dL/dh = log_coeff · R^log_mask`
    log_coeff: PolyRat,
    log_mask: u8,
    log_text: &'static str,
}

fn generators(kind: SystemKind) -> &'static Generators {
    static S1: OnceLock<Generators> = OnceLock::new();
    static S2: OnceLock<Generators> = OnceLock::new();
    static R: OnceLock<Generators> = OnceLock::new();
    match kind {
        SystemKind::S1 => S1.get_or_init(|| Generators {
            radicals: vec![Radical {
                lead: qi(1),
                roots: vec![qi(0), qi(-1)],
                text: "sqrt(h^2 + h)",
            }],
            // 1/S = S/(h(h+1))
            log_coeff: &PolyRat::inv_linear(qi(0), 1) * &PolyRat::inv_linear(qi(-1), 1),
            log_mask: 1,
            log_text: "ln|2*sqrt(h^2 + h) + 2h + 1|",
        }),
        SystemKind::S2 => S2.get_or_init(|| Generators {
            radicals: vec![
                Radical {
                    lead: qi(1),
                    roots: vec![qi(0)],
                    text: "sqrt(h)",
                },
                Radical {
                    lead: qi(-1),
                    roots: vec![qi(1)],
                    text: "sqrt(1 - h)",
                },
            ],
            // u/(h(1-h))
            log_coeff: (&PolyRat::inv_linear(qi(0), 1) * &PolyRat::inv_linear(qi(1), 1)).scale(&qi(-1)),
            log_mask: 1,
            log_text: "ln((1 + sqrt(h))/(1 - sqrt(h)))",
        }),
        SystemKind::R19 | SystemKind::R20 => R.get_or_init(|| Generators {
            radicals: vec![Radical {
                lead: qi(4096),
                roots: vec![q(1, 64), q(-1, 64)],
                text: "sqrt(4096h^2 - 1)",
            }],
            // 64/S = S/(64 (h - 1/64)(h + 1/64))
            log_coeff: (&PolyRat::inv_linear(q(1, 64), 1) * &PolyRat::inv_linear(q(-1, 64), 1)).scale(&q(1, 64)),
            log_mask: 1,
            log_text: "ln(64h + sqrt(4096h^2 - 1))",
        }),
    }
}

/// Floating values of the radicals and of the logarithm at `h`.
pub fn generator_values(kind: SystemKind, h: f64) -> (Vec<f64>, f64) {
    match kind {
        SystemKind::S1 => {
            let s = (h * (h + 1.0)).sqrt();
            let l = if h > 0.0 {
                (2.0 * h + 1.0 + 2.0 * s).ln()
            } else {
                -(2.0 * s - 2.0 * h - 1.0).ln()
            };
            (vec![s], l)
        }
        SystemKind::S2 => {
            let u = h.sqrt();
            (vec![u, (1.0 - h).sqrt()], 2.0 * u.atanh())
        }
        SystemKind::R19 | SystemKind::R20 => {
            let s = ((64.0 * h - 1.0) * (64.0 * h + 1.0)).sqrt();
            (vec![s], log_generator(h))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    /// Bit `b` set when radical `b` is present.
    pub radicals: u8,
    /// Power of the logarithm.
    pub log: u8,
}

impl Monomial {
    pub const ONE: Monomial = Monomial { radicals: 0, log: 0 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldElem {
    kind: SystemKind,
    terms: BTreeMap<Monomial, PolyRat>,
}

impl FieldElem {
    pub fn zero(kind: SystemKind) -> Self {
        FieldElem {
            kind,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_rat(kind: SystemKind, c: PolyRat) -> Self {
        FieldElem::monomial(kind, Monomial::ONE, c)
    }

    pub fn constant(kind: SystemKind, c: Q) -> Self {
        FieldElem::from_rat(kind, PolyRat::constant(c))
    }

    pub fn poly(kind: SystemKind, p: Poly) -> Self {
        FieldElem::from_rat(kind, PolyRat::from_poly(p))
    }

    /// The variable `h`.
    pub fn h(kind: SystemKind) -> Self {
        FieldElem::poly(kind, Poly::h())
    }

    pub fn monomial(kind: SystemKind, m: Monomial, c: PolyRat) -> Self {
        let mut e = FieldElem::zero(kind);
        if !c.is_zero() {
            e.terms.insert(m, c);
        }
        e
    }

    /// Radical number `idx` (`S`, or `u`/`v` for S2).
    pub fn radical(kind: SystemKind, idx: usize) -> Self {
        assert!(idx < generators(kind).radicals.len(), "no radical {idx} for {kind}");
        FieldElem::monomial(
            kind,
            Monomial {
                radicals: 1 << idx,
                log: 0,
            },
            PolyRat::one(),
        )
    }

    pub fn log(kind: SystemKind) -> Self {
        FieldElem::monomial(kind, Monomial { radicals: 0, log: 1 }, PolyRat::one())
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, PolyRat> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_log_power(&self) -> u8 {
        self.terms.keys().map(|m| m.log).max().unwrap_or(0)
    }

    fn add_term(&mut self, m: Monomial, c: PolyRat) {
        if c.is_zero() {
            return;
        }
        let v = match self.terms.get(&m) {
            Some(old) => old + &c,
            None => c,
        };
        if v.is_zero() {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, v);
        }
    }

    pub fn add(&self, o: &FieldElem) -> FieldElem {
        assert_eq!(generators(self.kind) as *const _, generators(o.kind) as *const _, "mixed fields");
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.add_term(*m, c.clone());
        }
        out
    }

    pub fn sub(&self, o: &FieldElem) -> FieldElem {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> FieldElem {
        self.scale(&PolyRat::constant(-Q::one()))
    }

    pub fn scale(&self, c: &PolyRat) -> FieldElem {
        let mut out = FieldElem::zero(self.kind);
        for (m, t) in &self.terms {
            out.add_term(*m, t * c);
        }
        out
    }

    pub fn scale_q(&self, c: Q) -> FieldElem {
        self.scale(&PolyRat::constant(c))
    }

    fn mul_monomials(&self, a: Monomial, b: Monomial) -> (Monomial, PolyRat) {
        let g = generators(self.kind);
        let mut c = PolyRat::one();
        let shared = a.radicals & b.radicals;
        for (i, r) in g.radicals.iter().enumerate() {
            if shared & (1 << i) != 0 {
                c = &c * &r.square();
            }
        }
        (
            Monomial {
                radicals: a.radicals ^ b.radicals,
                log: a.log + b.log,
            },
            c,
        )
    }

    pub fn mul(&self, o: &FieldElem) -> FieldElem {
        let mut out = FieldElem::zero(self.kind);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                let (m, extra) = self.mul_monomials(*ma, *mb);
                out.add_term(m, &(ca * cb) * &extra);
            }
        }
        out
    }

    pub fn differentiate(&self) -> FieldElem {
        let g = generators(self.kind);
        let mut out = FieldElem::zero(self.kind);
        for (m, c) in &self.terms {
            let mut dc = c.derivative();
            for (i, r) in g.radicals.iter().enumerate() {
                if m.radicals & (1 << i) != 0 {
                    dc = &dc + &(c * &r.log_derivative());
                }
            }
            out.add_term(*m, dc);
            if m.log > 0 {
                let lowered = Monomial {
                    radicals: m.radicals,
                    log: m.log - 1,
                };
                let dl = Monomial {
                    radicals: g.log_mask,
                    log: 0,
                };
                let (mm, extra) = self.mul_monomials(lowered, dl);
                let coeff = &(c * &g.log_coeff) * &extra;
                out.add_term(mm, coeff.scale(&qi(m.log as i64)));
            }
        }
        out
    }

    fn monomial_value(m: Monomial, rad: &[f64], log: f64) -> f64 {
        let mut v = 1.0;
        for (i, r) in rad.iter().enumerate() {
            if m.radicals & (1 << i) != 0 {
                v *= r;
            }
        }
        v * log.powi(m.log as i32)
    }

    /// Floating evaluation with float-converted coefficients.
    pub fn evaluate(&self, h: f64) -> f64 {
        let (rad, log) = generator_values(self.kind, h);
        self.terms
            .iter()
            .map(|(m, c)| c.eval_f64(h) * Self::monomial_value(*m, &rad, log))
            .sum()
    }

    /// Per-monomial contributions with coefficients evaluated exactly at the
    /// binary value of `h`; their sum is the element's value.
    pub fn term_values(&self, h: f64) -> Vec<f64> {
        let (rad, log) = generator_values(self.kind, h);
        let hq = q_from_f64(h);
        self.terms
            .iter()
            .map(|(m, c)| {
                let cv = c.eval(&hq).map(|v| q_to_f64(&v)).unwrap_or(f64::NAN);
                cv * Self::monomial_value(*m, &rad, log)
            })
            .collect()
    }

    /// Evaluation with exact coefficients; preferable when the rational
    /// coefficients are large and cancel.
    pub fn evaluate_precise(&self, h: f64) -> f64 {
        self.term_values(h).iter().sum()
    }
}

/// Working precision of [`PreciseElem`] in bits.
pub const PRECISE_BITS: usize = 320;

type Big = FBig;

fn big_int(x: &num_bigint::BigInt) -> Big {
    let i: IBig = x.to_string().parse().expect("decimal integer");
    Big::from(i).with_precision(PRECISE_BITS).value()
}

fn big_q(x: &Q) -> Big {
    big_int(x.numer()) / big_int(x.denom())
}

fn big_f64(x: f64) -> Big {
    Big::try_from(x).expect("finite").with_precision(PRECISE_BITS).value()
}

struct PreciseTerm {
    monomial: Monomial,
    num: Vec<Big>,
    den: Vec<(Big, u32)>,
}

/// A [`FieldElem`] prepared for multiprecision evaluation. Wronskians of
/// the families cancel by many orders of magnitude near the ends of their
/// intervals, beyond what `f64` resolves.
pub struct PreciseElem {
    kind: SystemKind,
    terms: Vec<PreciseTerm>,
}

/// Value together with the sum of absolute term contributions.
#[derive(Clone, Copy, Debug)]
pub struct PreciseValue {
    pub value: f64,
    pub scale: f64,
}

impl PreciseElem {
    pub fn new(e: &FieldElem) -> Self {
        let terms = e
            .terms
            .iter()
            .map(|(m, c)| PreciseTerm {
                monomial: *m,
                num: c.numerator().coeffs().iter().map(big_q).collect(),
                den: c.denominator_roots().iter().map(|(r, k)| (big_q(r), *k)).collect(),
            })
            .collect();
        PreciseElem { kind: e.kind, terms }
    }

    fn generators(&self, h: &Big) -> (Vec<Big>, Big) {
        let one = big_f64(1.0);
        let two = big_f64(2.0);
        let g = generators(self.kind);
        let rads: Vec<Big> = g
            .radicals
            .iter()
            .map(|r| {
                let mut sq = big_q(&r.lead);
                for root in &r.roots {
                    sq *= h.clone() - big_q(root);
                }
                sq.sqrt()
            })
            .collect();
        let log = match self.kind {
            SystemKind::S1 => {
                let s = rads[0].clone();
                let a = two.clone() * h.clone() + one.clone();
                if *h > Big::ZERO {
                    (a + two * s).ln()
                } else {
                    -(two * s - a).ln()
                }
            }
            SystemKind::S2 => {
                let u = rads[0].clone();
                ((one.clone() + u.clone()) / (one - u)).ln()
            }
            SystemKind::R19 | SystemKind::R20 => (big_f64(64.0) * h.clone() + rads[0].clone()).ln(),
        };
        (rads, log)
    }

    pub fn evaluate(&self, h: f64) -> PreciseValue {
        let hb = big_f64(h);
        let (rads, log) = self.generators(&hb);
        let mut total = Big::ZERO;
        let mut scale = 0.0;
        for t in &self.terms {
            let mut v = Big::ZERO;
            for c in t.num.iter().rev() {
                v = v * hb.clone() + c.clone();
            }
            for (r, k) in &t.den {
                let d = hb.clone() - r.clone();
                for _ in 0..*k {
                    v /= d.clone();
                }
            }
            for (i, r) in rads.iter().enumerate() {
                if t.monomial.radicals & (1 << i) != 0 {
                    v *= r.clone();
                }
            }
            for _ in 0..t.monomial.log {
                v *= log.clone();
            }
            scale += v.to_f64().value().abs();
            total += v;
        }
        PreciseValue {
            value: total.to_f64().value(),
            scale,
        }
    }
}

impl fmt::Display for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let g = generators(self.kind);
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut factors = vec![format!("({c})")];
                for (i, r) in g.radicals.iter().enumerate() {
                    if m.radicals & (1 << i) != 0 {
                        factors.push(r.text.to_string());
                    }
                }
                match m.log {
                    0 => {}
                    1 => factors.push(g.log_text.to_string()),
                    e => factors.push(format!("{}^{e}", g.log_text)),
                }
                factors.join("*")
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

pub fn differentiate(e: &FieldElem) -> FieldElem {
    e.differentiate()
}

/// Wronskian of the first `m` functions, by Laplace expansion along the
/// last row with minors memoised on column subsets.
pub fn wronskian(funcs: &[FieldElem], m: usize) -> FieldElem {
    assert!(m >= 1 && m <= funcs.len(), "wronskian order out of range");
    let kind = funcs[0].kind;
    let mut rows: Vec<Vec<FieldElem>> = vec![funcs[..m].to_vec()];
    for r in 1..m {
        let next = rows[r - 1].iter().map(|e| e.differentiate()).collect();
        rows.push(next);
    }
    // minors[mask] = det(rows 0..popcount(mask), columns in mask)
    let mut minors: BTreeMap<u32, FieldElem> = BTreeMap::new();
    minors.insert(0, FieldElem::constant(kind, Q::one()));
    for size in 1..=m {
        let row = size - 1;
        let mut next = BTreeMap::new();
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let mut acc = FieldElem::zero(kind);
            let cols: Vec<usize> = (0..m).filter(|c| mask & (1 << c) != 0).collect();
            for (pos, &c) in cols.iter().enumerate() {
                let entry = &rows[row][c];
                if entry.is_zero() {
                    continue;
                }
                let minor = &minors[&(mask & !(1 << c))];
                if minor.is_zero() {
                    continue;
                }
                let t = entry.mul(minor);
                acc = if (row + pos) % 2 == 0 { acc.add(&t) } else { acc.sub(&t) };
            }
            next.insert(mask, acc);
        }
        minors = next;
    }
    minors.remove(&((1u32 << m) - 1)).expect("full minor")
}

/// The Chebyshev families spanning `M` for `n = 2` (S1, S2) and the closed
/// basis of the half-integer systems.
pub fn basis_family(kind: SystemKind, branch: Branch) -> Vec<FieldElem> {
    let h = FieldElem::h(kind);
    let one = FieldElem::constant(kind, Q::one());
    let lg = FieldElem::log(kind);
    match kind {
        SystemKind::S1 => {
            let s = FieldElem::radical(kind, 0);
            let two_h1 = FieldElem::poly(kind, Poly::from_i64(&[1, 2]));
            let f0 = if branch == Branch::Negative { h.add(&one) } else { h.clone() };
            vec![
                f0,
                s.clone(),
                FieldElem::poly(kind, Poly::from_i64(&[0, 1, 1])),
                lg.clone(),
                lg.scale_q(q(1, 2)).sub(&two_h1.mul(&s)),
                two_h1.mul(&lg).scale_q(q(1, 2)).sub(&s),
            ]
        }
        SystemKind::S2 => {
            let u = FieldElem::radical(kind, 0);
            let v = FieldElem::radical(kind, 1);
            let one_minus_h = FieldElem::poly(kind, Poly::from_i64(&[1, -1]));
            vec![
                u.clone(),
                h.clone(),
                h.mul(&u),
                one.sub(&v),
                FieldElem::poly(kind, Poly::from_i64(&[-1, 2])).add(&one_minus_h.mul(&v)),
                u.sub(&one_minus_h.mul(&lg).scale_q(q(1, 2))),
                lg,
            ]
        }
        SystemKind::R19 | SystemKind::R20 => vec![
            FieldElem::poly(kind, Poly::from_coeffs(vec![q(-1, 64), qi(1)])),
            FieldElem::radical(kind, 0),
            h.mul(&lg),
        ],
    }
}

/// Shape of each basis integral up to a constant factor.
pub fn basis_shapes(kind: SystemKind, branch: Branch) -> Vec<(BasisId, FieldElem)> {
    let fam = basis_family(kind, branch);
    let h = FieldElem::h(kind);
    match kind {
        SystemKind::S1 => {
            let linear = if branch == Branch::Negative {
                h.add(&FieldElem::constant(kind, Q::one()))
            } else {
                h
            };
            vec![
                (BasisId::I00, fam[1].clone()),
                (BasisId::I11, linear),
                (BasisId::Im11, fam[2].clone()),
                (BasisId::I02, fam[5].clone()),
            ]
        }
        SystemKind::S2 => vec![
            (BasisId::I01, fam[1].clone()),
            (BasisId::I10, fam[0].clone()),
            (BasisId::I11, fam[3].clone()),
            (BasisId::I02, fam[5].clone()),
        ],
        SystemKind::R19 => vec![
            (BasisId::Ih1, fam[0].clone()),
            (BasisId::I11, fam[0].clone()),
            (BasisId::I10, fam[1].clone()),
        ],
        SystemKind::R20 => vec![
            (BasisId::I01, fam[0].clone()),
            (BasisId::Ih1, fam[0].clone()),
            (BasisId::I00, fam[1].clone()),
        ],
    }
}

/// Closed forms of the basis integrals with constants fitted by quadrature
/// at one reference energy.
#[derive(Clone, Debug)]
pub struct ClosedBasis {
    pub kind: SystemKind,
    pub branch: Branch,
    pub reference_h: f64,
    pub constants: BTreeMap<BasisId, f64>,
    shapes: Vec<(BasisId, FieldElem)>,
}

pub fn default_reference_h(kind: SystemKind, branch: Branch) -> f64 {
    match (kind, branch) {
        (SystemKind::S1, Branch::Negative) => -2.0,
        (SystemKind::S1, _) => 1.0,
        (SystemKind::S2, _) => 0.5,
        _ => 1.0 / 32.0,
    }
}

impl ClosedBasis {
    pub fn fit(sys: &SystemSpec, branch: Branch, reference_h: f64) -> Result<Self> {
        let shapes = basis_shapes(sys.kind, branch);
        let mut constants = BTreeMap::new();
        for (id, shape) in &shapes {
            let v = integral_i(sys, reference_h, id.index())?;
            constants.insert(*id, v / shape.evaluate(reference_h));
        }
        Ok(ClosedBasis {
            kind: sys.kind,
            branch,
            reference_h,
            constants,
            shapes,
        })
    }

    pub fn fit_default(sys: &SystemSpec, branch: Branch) -> Result<Self> {
        ClosedBasis::fit(sys, branch, default_reference_h(sys.kind, branch))
    }

    pub fn shape(&self, id: BasisId) -> &FieldElem {
        &self.shapes.iter().find(|(b, _)| *b == id).expect("basis id of this system").1
    }

    pub fn value(&self, id: BasisId, h: f64) -> f64 {
        self.constants[&id] * self.shape(id).evaluate(h)
    }

    pub fn values(&self, h: f64) -> BasisValues {
        let values = basis_of(self.kind).iter().map(|&b| (b, self.value(b, h))).collect();
        let log = if self.kind.is_half_integer() { log_generator(h) } else { 0.0 };
        BasisValues { values, log }
    }
}

/// Result of the numerical Chebyshev check.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EctReport {
    /// Numerical evidence only: no sign change and no near-zero sample.
    pub is_ect_evidence: bool,
    pub interval: (f64, f64),
    pub samples: usize,
    pub min_abs_per_k: Vec<f64>,
    pub sign_changes_per_k: Vec<usize>,
    pub inconclusive_per_k: Vec<usize>,
    pub sign_per_k: Vec<i8>,
}

/// Relative size, against the largest `|W_k|` among nearby samples, below
/// which a sampled Wronskian is treated as unresolved.
pub const ECT_NEAR_ZERO: f64 = 1e-9;

/// Neighbouring samples on each side that define the local magnitude scale.
const ECT_WINDOW: usize = 16;

fn truncate_interval(ws: &[PreciseElem], interval: (f64, f64), radius: Option<f64>) -> (f64, f64) {
    let (mut lo, mut hi) = interval;
    if hi.is_infinite() {
        hi = match radius {
            Some(r) => r,
            None => ws
                .iter()
                .map(|w| tail_radius(|h| w.evaluate(h).value, lo, 1.0))
                .fold(lo + 1.0, f64::max),
        };
    }
    if lo.is_infinite() {
        lo = match radius {
            Some(r) => -r.abs(),
            None => ws
                .iter()
                .map(|w| tail_radius(|h| w.evaluate(h).value, hi, -1.0))
                .fold(hi - 1.0, f64::min),
        };
    }
    if interval.0.is_infinite() || interval.1.is_infinite() {
        log::info!("ect interval {:?} truncated to ({lo}, {hi})", interval);
    }
    (lo, hi)
}

pub fn ect_check(funcs: &[FieldElem], interval: (f64, f64), samples: usize) -> EctReport {
    ect_check_with(funcs, interval, samples, None)
}

/// As [`ect_check`], with an optional override of the truncation radius for
/// unbounded intervals. Interval ends are excluded (the families are
/// singular or vanish there); the grid clusters geometrically toward them.
pub fn ect_check_with(funcs: &[FieldElem], interval: (f64, f64), samples: usize, radius: Option<f64>) -> EctReport {
    let ws: Vec<PreciseElem> = (1..=funcs.len()).map(|m| PreciseElem::new(&wronskian(funcs, m))).collect();
    let (lo, hi) = truncate_interval(&ws, interval, radius);
    let pad = |x: f64| 1e-9 * x.abs().max(1.0);
    let grid = sample_grid(lo + pad(lo), hi - pad(hi), samples.max(2));
    let precision_floor = 2f64.powi(-(PRECISE_BITS as i32 - 40));
    let mut report = EctReport {
        is_ect_evidence: true,
        interval: (lo, hi),
        samples: grid.len(),
        min_abs_per_k: Vec::new(),
        sign_changes_per_k: Vec::new(),
        inconclusive_per_k: Vec::new(),
        sign_per_k: Vec::new(),
    };
    for w in &ws {
        let vals: Vec<PreciseValue> = grid.par_iter().map(|&h| w.evaluate(h)).collect();
        let mut min_abs = f64::INFINITY;
        let mut changes = 0;
        let mut unresolved = 0;
        let mut last_sign = 0i8;
        let mut first_sign = 0i8;
        for (i, pv) in vals.iter().enumerate() {
            let v = pv.value;
            let a = i.saturating_sub(ECT_WINDOW);
            let b = (i + ECT_WINDOW).min(vals.len() - 1);
            let local = vals[a..=b].iter().fold(0.0f64, |m, x| m.max(x.value.abs()));
            min_abs = min_abs.min(v.abs());
            if !v.is_finite() || v == 0.0 || v.abs() <= ECT_NEAR_ZERO * local || v.abs() <= precision_floor * pv.scale {
                unresolved += 1;
                continue;
            }
            let s = if v > 0.0 { 1 } else { -1 };
            if first_sign == 0 {
                first_sign = s;
            }
            if last_sign != 0 && s != last_sign {
                changes += 1;
            }
            last_sign = s;
        }
        if changes > 0 || unresolved > 0 {
            report.is_ect_evidence = false;
        }
        report.min_abs_per_k.push(min_abs);
        report.sign_changes_per_k.push(changes);
        report.inconclusive_per_k.push(unresolved);
        report.sign_per_k.push(first_sign);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_s1_radical() {
        let s = FieldElem::radical(SystemKind::S1, 0);
        let d = s.differentiate();
        let h: f64 = 1.7;
        let expect = (2.0 * h + 1.0) / (2.0 * (h * h + h).sqrt());
        assert!((d.evaluate(h) - expect).abs() < 1e-14);
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        for (kind, h) in [(SystemKind::S1, 2.0), (SystemKind::S1, -3.0), (SystemKind::S2, 0.4), (SystemKind::R19, 0.1)] {
            let l = FieldElem::log(kind);
            let d = l.differentiate().evaluate(h);
            let e = 1e-5;
            let fd = (l.evaluate(h + e) - l.evaluate(h - e)) / (2.0 * e);
            assert!((d - fd).abs() < 1e-7 * d.abs(), "{kind}: {d} vs {fd}");
        }
    }

    #[test]
    fn small_wronskians() {
        let fam = basis_family(SystemKind::S1, Branch::Main);
        let w1 = wronskian(&fam, 1);
        assert_eq!(w1, FieldElem::h(SystemKind::S1));
        let w2 = wronskian(&fam, 2);
        let h: f64 = 0.9;
        assert!((w2.evaluate(h) + h / (2.0 * (h * h + h).sqrt())).abs() < 1e-14);
        let s2 = basis_family(SystemKind::S2, Branch::Main);
        let w3 = wronskian(&s2, 3);
        assert_eq!(w3, FieldElem::constant(SystemKind::S2, q(1, 4)));
    }

    #[test]
    fn squares_fold_into_coefficients() {
        let u = FieldElem::radical(SystemKind::S2, 0);
        assert_eq!(u.mul(&u), FieldElem::h(SystemKind::S2));
    }
}
