//! Exact reduction of generating integrals to each system's basis.
//!
//! Three families of linear relations among the `I_{i,j}` hold for every
//! system, with `c(h)` exact rational functions:
//!
//! * weighted: `(2i + kj - 2k) I_{i,j} = 2j [l2 (2-k) I_{i+2,j-2} + l1 (1-k) I_{i+1,j-2} - l0 k I_{i,j-2}]`
//! * energy: `I_{p,q} = 2h I_{p+k,q-2} - 2 l2 I_{p+2,q-2} - 2 l1 I_{p+1,q-2} - 2 l0 I_{p,q-2}`
//! * ladder (fixed `j`, `c = 2p + kj`):
//!   `c h I_{p+k} = l2 (c + (j+2)(2-k)) I_{p+2} + l1 (c + (j+2)(1-k)) I_{p+1} + l0 (c - (j+2)k) I_p`
//!
//! The per-system rule tables decide which relation to solve for which
//! index, mirroring a fixed derivation order so output is deterministic.
//! For the half-integer systems the logarithm `Λ(h) = ln(64h + sqrt(4096h² - 1))`
//! enters through `I_{3/2,0}` (r19) or `I_{1/2,0}` (r20), both equal to `4Λ`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{q, q_from_f64, qi, CompiledRat, Poly, PolyRat, PolyRatJson, Q};
use crate::systems::{Part, Perturbation, SystemKind, SystemSpec};

/// `(i, j)` with `i` stored doubled so half-integers are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntegralIndex {
    pub twice_i: i32,
    pub j: u32,
}

impl IntegralIndex {
    pub const fn new(i: i32, j: u32) -> Self {
        IntegralIndex { twice_i: 2 * i, j }
    }

    pub const fn half(twice_i: i32, j: u32) -> Self {
        IntegralIndex { twice_i, j }
    }

    pub fn i_f64(self) -> f64 {
        self.twice_i as f64 / 2.0
    }

    pub fn i_q(self) -> Q {
        q(self.twice_i as i64, 2)
    }

    pub fn is_integer(self) -> bool {
        self.twice_i % 2 == 0
    }

    /// Shift `i` by `d2/2` and `j` by `dj`.
    fn shifted(self, d2: i32, dj: i32) -> Option<Self> {
        let j = self.j as i32 + dj;
        (j >= 0).then(|| IntegralIndex::half(self.twice_i + d2, j as u32))
    }

    fn i_label(self) -> String {
        if self.is_integer() {
            format!("{}", self.twice_i / 2)
        } else {
            format!("{}/2", self.twice_i)
        }
    }
}

impl fmt::Display for IntegralIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i_label(), self.j)
    }
}

/// Parses an `i` value such as `-1`, `1/2`, `1.5`.
pub fn parse_twice_i(s: &str) -> Result<i32> {
    let bad = || Error::InvalidArgument(format!("index i = {s:?} must be an integer or half-integer"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i32 = n.trim().parse().map_err(|_| bad())?;
        return match d.trim() {
            "1" => Ok(2 * n),
            "2" => Ok(n),
            _ => Err(bad()),
        };
    }
    let v: f64 = s.parse().map_err(|_| bad())?;
    let t = 2.0 * v;
    if t.fract() != 0.0 || t.abs() > 1e6 {
        return Err(bad());
    }
    Ok(t as i32)
}

impl FromStr for IntegralIndex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (a, b) = t
            .split_once(',')
            .ok_or_else(|| Error::InvalidArgument(format!("index {s:?} must look like \"i,j\"")))?;
        let j: u32 = b
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("index j in {s:?} must be a nonnegative integer")))?;
        Ok(IntegralIndex::half(parse_twice_i(a)?, j))
    }
}

/// Names of the basis integrals across the four systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasisId {
    I00,
    I01,
    I10,
    I11,
    /// `I_{-1,1}`
    Im11,
    I02,
    /// `I_{1/2,1}`
    Ih1,
}

impl BasisId {
    pub fn index(self) -> IntegralIndex {
        match self {
            BasisId::I00 => IntegralIndex::new(0, 0),
            BasisId::I01 => IntegralIndex::new(0, 1),
            BasisId::I10 => IntegralIndex::new(1, 0),
            BasisId::I11 => IntegralIndex::new(1, 1),
            BasisId::Im11 => IntegralIndex::new(-1, 1),
            BasisId::I02 => IntegralIndex::new(0, 2),
            BasisId::Ih1 => IntegralIndex::half(1, 1),
        }
    }

    pub fn label(self) -> String {
        format!("I{}", self.index())
    }
}

/// Basis integrals of each system, in canonical order.
pub fn basis_of(kind: SystemKind) -> &'static [BasisId] {
    match kind {
        SystemKind::S1 => &[BasisId::I00, BasisId::I11, BasisId::Im11, BasisId::I02],
        SystemKind::S2 => &[BasisId::I01, BasisId::I10, BasisId::I11, BasisId::I02],
        SystemKind::R19 => &[BasisId::Ih1, BasisId::I11, BasisId::I10],
        SystemKind::R20 => &[BasisId::I01, BasisId::Ih1, BasisId::I00],
    }
}

/// Numeric values of a system's basis integrals at one `h`, plus `Λ(h)`.
#[derive(Clone, Debug, Default)]
pub struct BasisValues {
    pub values: BTreeMap<BasisId, f64>,
    pub log: f64,
}

/// `Λ(h) = ln(64h + sqrt(4096h² - 1)) = acosh(64h)`.
pub fn log_generator(h: f64) -> f64 {
    (64.0 * h).acosh()
}

/// Evaluates every basis integral by quadrature.
pub fn quadrature_basis_values(sys: &SystemSpec, h: f64) -> Result<BasisValues> {
    let mut values = BTreeMap::new();
    for &b in basis_of(sys.kind) {
        values.insert(b, crate::quadrature::integral_i(sys, h, b.index())?);
    }
    let log = if sys.kind.is_half_integer() { log_generator(h) } else { 0.0 };
    Ok(BasisValues { values, log })
}

/// `sum_b c_b(h) I_b(h) + c_log(h) Λ(h)` with exact coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisCombo {
    pub kind: SystemKind,
    pub terms: BTreeMap<BasisId, PolyRat>,
    pub log: PolyRat,
}

impl BasisCombo {
    pub fn zero(kind: SystemKind) -> Self {
        BasisCombo {
            kind,
            terms: BTreeMap::new(),
            log: PolyRat::zero(),
        }
    }

    pub fn basis(kind: SystemKind, id: BasisId) -> Self {
        let mut c = BasisCombo::zero(kind);
        c.terms.insert(id, PolyRat::one());
        c
    }

    pub fn logarithm(kind: SystemKind, coeff: PolyRat) -> Self {
        let mut c = BasisCombo::zero(kind);
        c.log = coeff;
        c
    }

    pub fn coefficient(&self, id: BasisId) -> PolyRat {
        self.terms.get(&id).cloned().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.log.is_zero()
    }

    pub fn add_scaled(&mut self, other: &BasisCombo, s: &PolyRat) {
        if s.is_zero() {
            return;
        }
        for (id, c) in &other.terms {
            let v = &self.coefficient(*id) + &(c * s);
            if v.is_zero() {
                self.terms.remove(id);
            } else {
                self.terms.insert(*id, v);
            }
        }
        self.log = &self.log + &(&other.log * s);
    }

    pub fn scaled(&self, s: &PolyRat) -> BasisCombo {
        let mut out = BasisCombo::zero(self.kind);
        out.add_scaled(self, s);
        out
    }

    pub fn evaluate(&self, h: f64, vals: &BasisValues) -> f64 {
        let mut acc = 0.0;
        for (id, c) in &self.terms {
            acc += c.eval_f64(h) * vals.values.get(id).copied().unwrap_or(f64::NAN);
        }
        if !self.log.is_zero() {
            acc += self.log.eval_f64(h) * vals.log;
        }
        acc
    }

    pub fn compile(&self) -> CompiledCombo {
        CompiledCombo {
            terms: self.terms.iter().map(|(id, c)| (*id, c.compile())).collect(),
            log: (!self.log.is_zero()).then(|| self.log.compile()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let terms: BTreeMap<String, PolyRatJson> =
            self.terms.iter().map(|(id, c)| (id.label(), PolyRatJson::from(c))).collect();
        serde_json::json!({
            "system": self.kind.name(),
            "terms": terms,
            "log": PolyRatJson::from(&self.log),
        })
    }
}

impl fmt::Display for BasisCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut parts: Vec<String> = self.terms.iter().map(|(id, c)| format!("[{c}]*{}", id.label())).collect();
        if !self.log.is_zero() {
            parts.push(format!("[{}]*ln(64h + sqrt(4096h^2 - 1))", self.log));
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// Float image of a [`BasisCombo`] for repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledCombo {
    terms: Vec<(BasisId, CompiledRat)>,
    log: Option<CompiledRat>,
}

impl CompiledCombo {
    pub fn evaluate(&self, h: f64, vals: &BasisValues) -> f64 {
        self.terms(h, vals).iter().sum()
    }

    /// The individual summands, useful for cancellation estimates.
    pub fn terms(&self, h: f64, vals: &BasisValues) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .terms
            .iter()
            .map(|(id, c)| c.eval(h) * vals.values.get(id).copied().unwrap_or(f64::NAN))
            .collect();
        if let Some(l) = &self.log {
            out.push(l.eval(h) * vals.log);
        }
        out
    }
}

/// A linear relation `sum c_t I_t = 0`.
type Relation = Vec<(IntegralIndex, PolyRat)>;

fn push(rel: &mut Relation, idx: Option<IntegralIndex>, c: PolyRat) {
    if c.is_zero() {
        return;
    }
    let Some(idx) = idx else { return };
    if let Some(e) = rel.iter_mut().find(|(t, _)| *t == idx) {
        e.1 = &e.1 + &c;
    } else {
        rel.push((idx, c));
    }
}

fn konst(x: Q) -> PolyRat {
    PolyRat::constant(x)
}

fn h_times(x: Q) -> PolyRat {
    PolyRat::from_poly(Poly::h().scale(&x))
}

struct Shape {
    k2: i32,
    l0: Q,
    l1: Q,
    l2: Q,
}

impl Shape {
    fn of(sys: &SystemSpec) -> Self {
        let k2 = (&sys.k * qi(2)).to_integer().try_into().expect("small exponent");
        Shape {
            k2,
            l0: sys.lambda0.clone(),
            l1: sys.lambda1.clone(),
            l2: sys.lambda2.clone(),
        }
    }

    fn k(&self) -> Q {
        q(self.k2 as i64, 2)
    }

    fn weighted(&self, idx: IntegralIndex) -> Relation {
        let j = qi(idx.j as i64);
        let k = self.k();
        let pivot = idx.i_q() * qi(2) + &k * &j - &k * qi(2);
        let two_j = &j * qi(2);
        let mut rel = Relation::new();
        push(&mut rel, Some(idx), konst(pivot));
        push(&mut rel, idx.shifted(4, -2), konst(-(&two_j * &self.l2 * (qi(2) - &k))));
        push(&mut rel, idx.shifted(2, -2), konst(-(&two_j * &self.l1 * (Q::one() - &k))));
        push(&mut rel, idx.shifted(0, -2), konst(&two_j * &self.l0 * &k));
        rel
    }

    /// Energy relation anchored at `(p, q)`.
    fn energy(&self, pq: IntegralIndex) -> Relation {
        let mut rel = Relation::new();
        push(&mut rel, Some(pq), PolyRat::one());
        push(&mut rel, pq.shifted(self.k2, -2), h_times(qi(-2)));
        push(&mut rel, pq.shifted(4, -2), konst(&self.l2 * qi(2)));
        push(&mut rel, pq.shifted(2, -2), konst(&self.l1 * qi(2)));
        push(&mut rel, pq.shifted(0, -2), konst(&self.l0 * qi(2)));
        rel
    }

    /// Fixed-`j` ladder anchored at `p`.
    fn ladder(&self, p: IntegralIndex) -> Relation {
        let k = self.k();
        let jj = qi(p.j as i64 + 2);
        let c = p.i_q() * qi(2) + &k * qi(p.j as i64);
        let mut rel = Relation::new();
        push(&mut rel, p.shifted(self.k2, 0), h_times(-c.clone()));
        push(&mut rel, p.shifted(4, 0), konst(&self.l2 * (&c + &jj * (qi(2) - &k))));
        push(&mut rel, p.shifted(2, 0), konst(&self.l1 * (&c + &jj * (Q::one() - &k))));
        push(&mut rel, Some(p), konst(&self.l0 * (&c - &jj * &k)));
        rel
    }
}

/// Solves `rel` for `target`.
fn solve(rel: Relation, target: IntegralIndex, rule: &'static str) -> Result<Vec<(IntegralIndex, PolyRat)>> {
    let pivot = rel
        .iter()
        .find(|(t, _)| *t == target)
        .map(|(_, c)| c.clone())
        .unwrap_or_default();
    if pivot.is_zero() {
        return Err(Error::ZeroPivot {
            rule,
            index: target.to_string(),
        });
    }
    let inv = invert(&pivot).ok_or_else(|| Error::ZeroPivot {
        rule,
        index: target.to_string(),
    })?;
    let minus_inv = -&inv;
    Ok(rel
        .into_iter()
        .filter(|(t, c)| *t != target && !c.is_zero())
        .map(|(t, c)| (t, &c * &minus_inv))
        .collect())
}

/// Reciprocal of a constant or of `a h + b` (the only pivots that occur).
fn invert(p: &PolyRat) -> Option<PolyRat> {
    let num = p.numerator();
    let mut out = match num.degree()? {
        0 => PolyRat::constant(Q::one() / num.coeff(0)),
        1 => {
            let a = num.coeff(1);
            let root = -num.coeff(0) / &a;
            PolyRat::inv_linear(root, 1).scale(&(Q::one() / a))
        }
        _ => return None,
    };
    for (r, m) in p.denominator_roots() {
        out = out.mul_linear(r, *m);
    }
    Some(out)
}

enum Rule {
    Basis(BasisId),
    /// The integral equals `coeff · Λ(h)`.
    Log(PolyRat),
    Expand(&'static str, Vec<(IntegralIndex, PolyRat)>),
}

/// Memoised reducer for one system. Not shared between threads; build one
/// per worker.
pub struct Reducer {
    sys: SystemSpec,
    shape: Shape,
    memo: HashMap<IntegralIndex, BasisCombo>,
    active: HashSet<IntegralIndex>,
    trace: Vec<(IntegralIndex, &'static str)>,
}

const R_WEIGHTED: &str = "weighted recurrence";
const R_ENERGY: &str = "energy recurrence";
const R_LADDER_UP: &str = "fixed-j ladder (ascending)";
const R_LADDER_DOWN: &str = "fixed-j ladder (descending)";
const R_LOWER_LEVEL: &str = "level-lowering recurrence";
const R_SEED: &str = "low-level identity";

impl Reducer {
    pub fn new(sys: &SystemSpec) -> Self {
        Reducer {
            shape: Shape::of(sys),
            sys: sys.clone(),
            memo: HashMap::new(),
            active: HashSet::new(),
            trace: Vec::new(),
        }
    }

    pub fn kind(&self) -> SystemKind {
        self.sys.kind
    }

    /// Rules applied so far, in order of first use.
    pub fn trace(&self) -> &[(IntegralIndex, &'static str)] {
        &self.trace
    }

    fn unreachable(&self, idx: IntegralIndex) -> Error {
        Error::Unreachable {
            system: self.sys.kind.name().into(),
            index: idx.to_string(),
        }
    }

    pub fn reduce(&mut self, idx: IntegralIndex) -> Result<BasisCombo> {
        if let Some(c) = self.memo.get(&idx) {
            return Ok(c.clone());
        }
        if idx.twice_i < -2 {
            return Err(self.unreachable(idx));
        }
        if !self.active.insert(idx) {
            return Err(Error::Numerical(format!("reduction cycle through {idx}")));
        }
        let out = self.reduce_fresh(idx);
        self.active.remove(&idx);
        let out = out?;
        self.memo.insert(idx, out.clone());
        Ok(out)
    }

    fn reduce_fresh(&mut self, idx: IntegralIndex) -> Result<BasisCombo> {
        let kind = self.sys.kind;
        match self.rule(idx)? {
            Rule::Basis(b) => Ok(BasisCombo::basis(kind, b)),
            Rule::Log(c) => Ok(BasisCombo::logarithm(kind, c)),
            Rule::Expand(name, terms) => {
                self.trace.push((idx, name));
                let mut acc = BasisCombo::zero(kind);
                for (t, c) in terms {
                    let sub = self.reduce(t)?;
                    acc.add_scaled(&sub, &c);
                }
                Ok(acc)
            }
        }
    }

    fn rule(&self, idx: IntegralIndex) -> Result<Rule> {
        match self.sys.kind {
            SystemKind::S1 => self.rule_s1(idx),
            SystemKind::S2 => self.rule_s2(idx),
            SystemKind::R19 => self.rule_r19(idx),
            SystemKind::R20 => self.rule_r20(idx),
        }
    }

    fn rule_s1(&self, idx: IntegralIndex) -> Result<Rule> {
        if !idx.is_integer() {
            return Err(self.unreachable(idx));
        }
        let (i, j) = (idx.twice_i / 2, idx.j);
        let ix = |a: i32, b: u32| IntegralIndex::new(a, b);
        // 2h + 1 and its reciprocal
        let two_h1 = PolyRat::from_poly(Poly::from_i64(&[1, 2]));
        let inv_two_h1 = PolyRat::inv_linear(q(-1, 2), 1).scale(&q(1, 2));
        if i + j as i32 <= 2 {
            return Ok(match (i, j) {
                (0, 0) => Rule::Basis(BasisId::I00),
                (-1, 1) => Rule::Basis(BasisId::Im11),
                (1, 1) => Rule::Basis(BasisId::I11),
                (0, 2) => Rule::Basis(BasisId::I02),
                (1, 0) => Rule::Expand(R_SEED, vec![(ix(0, 2), inv_two_h1.clone()), (ix(0, 0), inv_two_h1)]),
                (0, 1) => Rule::Expand(
                    R_SEED,
                    vec![(ix(-1, 1), inv_two_h1.scale(&qi(2))), (ix(1, 1), -&inv_two_h1)],
                ),
                (-1, 2) => Rule::Expand(
                    R_SEED,
                    vec![
                        (ix(0, 0), PolyRat::from_poly(Poly::from_coeffs(vec![q(1, 2), qi(1)]))),
                        (ix(1, 0), konst(q(-1, 2))),
                    ],
                ),
                (2, 0) => Rule::Expand(R_SEED, vec![(ix(0, 0), PolyRat::one())]),
                (-1, 3) => Rule::Expand(R_SEED, vec![(ix(-1, 1), konst(q(3, 2))), (ix(1, 1), konst(q(-3, 2)))]),
                _ => return Err(self.unreachable(idx)),
            });
        }
        if j >= 2 {
            // j/(2(i+j-1)) [(2h+1) I_{i+1,j-2} - I_{i,j-2}]
            let w = q(j as i64, 2 * (i as i64 + j as i64 - 1));
            return Ok(Rule::Expand(
                R_LOWER_LEVEL,
                vec![(ix(i + 1, j - 2), two_h1.scale(&w)), (ix(i, j - 2), konst(-w))],
            ));
        }
        let rel = self.shape.ladder(ix(i - 2, j));
        Ok(Rule::Expand(R_LADDER_UP, solve(rel, idx, R_LADDER_UP)?))
    }

    fn rule_s2(&self, idx: IntegralIndex) -> Result<Rule> {
        if !idx.is_integer() {
            return Err(self.unreachable(idx));
        }
        let (i, j) = (idx.twice_i / 2, idx.j);
        let ix = |a: i32, b: u32| IntegralIndex::new(a, b);
        if i + j as i32 <= 2 {
            let inv_h1 = PolyRat::inv_linear(qi(1), 1).scale(&q(1, 2));
            return Ok(match (i, j) {
                (0, 1) => Rule::Basis(BasisId::I01),
                (1, 0) => Rule::Basis(BasisId::I10),
                (1, 1) => Rule::Basis(BasisId::I11),
                (0, 2) => Rule::Basis(BasisId::I02),
                (0, 0) => Rule::Expand(R_SEED, vec![(ix(1, 0), PolyRat::one())]),
                (-1, 1) => Rule::Expand(R_SEED, vec![(ix(0, 1), PolyRat::one())]),
                (-1, 2) => Rule::Expand(R_SEED, vec![(ix(1, 0), h_times(q(4, 3)))]),
                (2, 0) => Rule::Expand(R_SEED, vec![(ix(0, 2), inv_h1.clone()), (ix(1, 0), inv_h1.scale(&qi(-2)))]),
                (-1, 3) => Rule::Expand(
                    R_SEED,
                    vec![
                        (ix(1, 1), PolyRat::from_poly(Poly::from_i64(&[-2, 2]))),
                        (ix(0, 1), konst(qi(2))),
                    ],
                ),
                _ => return Err(self.unreachable(idx)),
            });
        }
        if j >= 2 {
            return Ok(Rule::Expand(R_WEIGHTED, solve(self.shape.weighted(idx), idx, R_WEIGHTED)?));
        }
        let rel = self.shape.energy(ix(i - 2, j + 2));
        Ok(Rule::Expand(R_ENERGY, solve(rel, idx, R_ENERGY)?))
    }

    /// Shared `j >= 2` step for the half-integer systems: the weighted
    /// relation unless its pivot vanishes, then the energy relation.
    fn lower_j(&self, idx: IntegralIndex) -> Result<Rule> {
        let rel = self.shape.weighted(idx);
        let pivot_ok = rel.iter().any(|(t, c)| *t == idx && !c.is_zero());
        if pivot_ok {
            Ok(Rule::Expand(R_WEIGHTED, solve(rel, idx, R_WEIGHTED)?))
        } else {
            Ok(Rule::Expand(R_ENERGY, solve(self.shape.energy(idx), idx, R_ENERGY)?))
        }
    }

    fn rule_r19(&self, idx: IntegralIndex) -> Result<Rule> {
        let t = idx.twice_i;
        let at = |d: i32| IntegralIndex::half(t + d, idx.j);
        match idx.j {
            j if j >= 2 => self.lower_j(idx),
            1 => match t {
                1 => Ok(Rule::Basis(BasisId::Ih1)),
                2 => Ok(Rule::Basis(BasisId::I11)),
                t if t >= 3 => Ok(Rule::Expand(R_LADDER_UP, solve(self.shape.ladder(at(-4)), idx, R_LADDER_UP)?)),
                _ => Ok(Rule::Expand(R_LADDER_DOWN, solve(self.shape.ladder(at(-2)), idx, R_LADDER_DOWN)?)),
            },
            _ => match t {
                2 => Ok(Rule::Basis(BasisId::I10)),
                3 => Ok(Rule::Log(konst(qi(4)))),
                t if t >= 4 => Ok(Rule::Expand(R_LADDER_UP, solve(self.shape.ladder(at(-4)), idx, R_LADDER_UP)?)),
                _ => Ok(Rule::Expand(R_LADDER_DOWN, solve(self.shape.ladder(at(-2)), idx, R_LADDER_DOWN)?)),
            },
        }
    }

    fn rule_r20(&self, idx: IntegralIndex) -> Result<Rule> {
        let t = idx.twice_i;
        let at = |d: i32| IntegralIndex::half(t + d, idx.j);
        match idx.j {
            j if j >= 2 => self.lower_j(idx),
            1 => match t {
                0 => Ok(Rule::Basis(BasisId::I01)),
                1 => Ok(Rule::Basis(BasisId::Ih1)),
                t if t >= 2 => Ok(Rule::Expand(R_LADDER_UP, solve(self.shape.ladder(at(-2)), idx, R_LADDER_UP)?)),
                _ => Ok(Rule::Expand(R_LADDER_DOWN, solve(self.shape.ladder(at(0)), idx, R_LADDER_DOWN)?)),
            },
            _ => match t {
                0 => Ok(Rule::Basis(BasisId::I00)),
                1 => Ok(Rule::Log(konst(qi(4)))),
                t if t >= 2 => Ok(Rule::Expand(R_LADDER_UP, solve(self.shape.ladder(at(-2)), idx, R_LADDER_UP)?)),
                _ => Ok(Rule::Expand(R_LADDER_DOWN, solve(self.shape.ladder(at(0)), idx, R_LADDER_DOWN)?)),
            },
        }
    }
}

/// One-shot reduction with a fresh memo table.
pub fn reduce_integral(sys: &SystemSpec, idx: IntegralIndex) -> Result<BasisCombo> {
    Reducer::new(sys).reduce(idx)
}

/// Coefficients `rho_{i,j}` of `M = sum rho_{i,j} I_{i,j}`, exact.
///
/// The `b` terms enter directly; an `a_{i,j}` term becomes
/// `(i-k-1)/(j+1) I_{i-1,j+1}` after trading `dy` for `dx`; lower-branch
/// coefficients pick up the parity sign of the index they land on.
pub fn melnikov_rho(sys: &SystemSpec, pert: &Perturbation) -> Result<BTreeMap<IntegralIndex, Q>> {
    pert.validate()?;
    let mut rho: BTreeMap<IntegralIndex, Q> = BTreeMap::new();
    let parity = |jj: u32| if (jj + 1).is_multiple_of(2) { Q::one() } else { -Q::one() };
    let mut add = |idx: IntegralIndex, v: Q| {
        if v.is_zero() {
            return;
        }
        let e = rho.entry(idx).or_insert_with(Q::zero);
        *e += v;
    };
    for (part, sign_lower) in [(Part::BPlus, false), (Part::BMinus, true)] {
        for (&(i, j), &v) in pert.table(part) {
            let idx = IntegralIndex::new(i as i32, j);
            let s = if sign_lower { parity(j) } else { Q::one() };
            add(idx, s * q_from_f64(v));
        }
    }
    for (part, sign_lower) in [(Part::APlus, false), (Part::AMinus, true)] {
        for (&(i, j), &v) in pert.table(part) {
            let idx = IntegralIndex::new(i as i32 - 1, j + 1);
            let w = (qi(i as i64) - &sys.k - Q::one()) / qi(j as i64 + 1);
            let s = if sign_lower { parity(j + 1) } else { Q::one() };
            add(idx, s * w * q_from_f64(v));
        }
    }
    rho.retain(|_, v| !v.is_zero());
    Ok(rho)
}

/// `M(h)` pushed through the reducer.
pub fn reduce_melnikov(sys: &SystemSpec, pert: &Perturbation) -> Result<BasisCombo> {
    let mut red = Reducer::new(sys);
    reduce_melnikov_with(&mut red, sys, pert)
}

pub fn reduce_melnikov_with(red: &mut Reducer, sys: &SystemSpec, pert: &Perturbation) -> Result<BasisCombo> {
    let rho = melnikov_rho(sys, pert)?;
    let mut acc = BasisCombo::zero(sys.kind);
    for (idx, r) in rho {
        let c = red.reduce(idx)?;
        acc.add_scaled(&c, &PolyRat::constant(r));
    }
    Ok(acc)
}

/// `rho_0 = b+_{0,2} - b-_{0,2} - 3/4 (a+_{1,1} - a-_{1,1})` for r19.
pub fn rho0_r19(pert: &Perturbation) -> Q {
    use Part::*;
    let g = |p, i, j| q_from_f64(pert.get(p, i, j));
    g(BPlus, 0, 2) - g(BMinus, 0, 2) - q(3, 4) * (g(APlus, 1, 1) - g(AMinus, 1, 1))
}

/// `tau` when the log coefficient has the form `tau · h` (zero included).
pub fn log_tau(combo: &BasisCombo) -> Option<Q> {
    if combo.log.is_zero() {
        return Some(Q::zero());
    }
    let p = combo.log.as_poly()?;
    (p.degree() == Some(1) && p.coeff(0).is_zero()).then(|| p.coeff(1))
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeEntry {
    pub label: String,
    /// `None` for the zero polynomial.
    pub degree: Option<usize>,
    pub bound: i64,
    pub polynomial: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeReport {
    pub system: SystemKind,
    pub n: u32,
    pub prefactor: String,
    pub entries: Vec<DegreeEntry>,
    /// Whether the log coefficient is a constant multiple of `h`.
    pub log_ok: bool,
    pub passes: bool,
}

fn entry(label: String, c: &PolyRat, bound: i64) -> DegreeEntry {
    let polynomial = c.is_polynomial();
    let degree = c.numerator().degree();
    let ok = polynomial && degree.is_none_or(|d| (d as i64) <= bound);
    DegreeEntry {
        label,
        degree,
        bound,
        polynomial,
        ok,
    }
}

/// Clears the structural prefactor of each system and compares the
/// coefficient degrees with the expected bounds.
pub fn degree_report_detail(combo: &BasisCombo, n: u32) -> DegreeReport {
    let n_i = n as i64;
    let (prefactor, scale): (String, Box<dyn Fn(&PolyRat) -> PolyRat>) = match combo.kind {
        SystemKind::S1 => ("2h + 1".into(), Box::new(|c: &PolyRat| c.mul_linear(&q(-1, 2), 1).scale(&qi(2)))),
        SystemKind::S2 => {
            let e = n_i - 2;
            (
                format!("(h - 1)^{e}"),
                Box::new(move |c: &PolyRat| {
                    if e >= 0 {
                        c.mul_linear(&qi(1), e as u32)
                    } else {
                        c.div_linear(&qi(1), (-e) as u32)
                    }
                }),
            )
        }
        _ => ("1".into(), Box::new(|c: &PolyRat| c.clone())),
    };
    let bounds: Vec<(BasisId, i64)> = match combo.kind {
        SystemKind::S1 => vec![
            (BasisId::I00, n_i - 1),
            (BasisId::I11, n_i - 1),
            (BasisId::Im11, n_i - 3),
            (BasisId::I02, 2),
        ],
        SystemKind::S2 => vec![
            (BasisId::I01, n_i - 2),
            (BasisId::I10, n_i - 1),
            (BasisId::I11, n_i - 1),
            (BasisId::I02, n_i - 2),
        ],
        SystemKind::R19 => {
            if n >= 4 {
                vec![(BasisId::Ih1, 2 * n_i - 5), (BasisId::I11, 2 * n_i - 4), (BasisId::I10, 2 * n_i - 4)]
            } else {
                vec![(BasisId::Ih1, 3), (BasisId::I11, 2), (BasisId::I10, 2)]
            }
        }
        SystemKind::R20 => {
            if n >= 3 {
                vec![(BasisId::I01, 2 * n_i - 4), (BasisId::Ih1, 2 * n_i - 3), (BasisId::I00, 2 * n_i - 2)]
            } else {
                vec![(BasisId::I01, 2), (BasisId::Ih1, 1), (BasisId::I00, 2)]
            }
        }
    };
    let entries: Vec<DegreeEntry> = bounds
        .into_iter()
        .map(|(id, b)| entry(id.label(), &scale(&combo.coefficient(id)), b))
        .collect();
    let log_ok = match combo.kind {
        SystemKind::R19 | SystemKind::R20 => log_tau(combo).is_some(),
        _ => combo.log.is_zero(),
    };
    let passes = log_ok && entries.iter().all(|e| e.ok);
    DegreeReport {
        system: combo.kind,
        n,
        prefactor,
        entries,
        log_ok,
        passes,
    }
}

pub fn degree_report(combo: &BasisCombo, n: u32) -> bool {
    degree_report_detail(combo, n).passes
}

/// Sign helper for callers that want `(-1)^(j+1)`.
pub fn parity_sign(j: u32) -> f64 {
    if (j + 1).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Human summary of the sign of a rational.
pub fn sign_of(x: &Q) -> i8 {
    if x.is_positive() {
        1
    } else if x.is_negative() {
        -1
    } else {
        0
    }
}
