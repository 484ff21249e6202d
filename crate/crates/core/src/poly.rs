//! Exact polynomials in the energy variable `h` and rational functions whose
//! denominators split into linear factors with rational roots.
//!
//! Every denominator produced by the recurrences and by differentiating the
//! closed-form basis functions has this shape, so no polynomial gcd is ever
//! needed: a [`PolyRat`] keeps its denominator as a multiset of roots and
//! cancels a factor whenever the numerator vanishes at that root.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

pub type Q = BigRational;

/// Shorthand for the rational `p/q`.
pub fn q(p: i64, d: i64) -> Q {
    Q::new(BigInt::from(p), BigInt::from(d))
}

pub fn qi(p: i64) -> Q {
    Q::from_integer(BigInt::from(p))
}

/// Exact conversion of a finite double (every finite double is dyadic).
pub fn q_from_f64(x: f64) -> Q {
    Q::from_float(x).expect("finite value")
}

pub fn q_to_f64(x: &Q) -> f64 {
    match x.to_f64() {
        Some(v) if v.is_finite() => v,
        _ => {
            // Numerator and denominator both overflow; scale first.
            let n = x.numer().bits() as i64;
            let d = x.denom().bits() as i64;
            let shift = n - d;
            let scaled = if shift > 0 {
                x / Q::from_integer(BigInt::one() << (shift as usize))
            } else {
                x * Q::from_integer(BigInt::one() << ((-shift) as usize))
            };
            scaled.to_f64().unwrap_or(0.0) * 2f64.powi(shift as i32)
        }
    }
}

pub fn format_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn parse_q(s: &str) -> Option<Q> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                None
            } else {
                Some(Q::new(n, d))
            }
        }
        None => s.parse::<BigInt>().ok().map(Q::from_integer),
    }
}

/// Dense polynomial with ascending coefficients, always trimmed.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Poly {
    coeffs: Vec<Q>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Poly::constant(Q::one())
    }

    pub fn constant(c: Q) -> Self {
        Poly::from_coeffs(vec![c])
    }

    /// The monomial `h`.
    pub fn h() -> Self {
        Poly::from_coeffs(vec![Q::zero(), Q::one()])
    }

    /// `h - r`.
    pub fn linear(r: &Q) -> Self {
        Poly::from_coeffs(vec![-r.clone(), Q::one()])
    }

    pub fn from_coeffs(mut coeffs: Vec<Q>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Poly::from_coeffs(coeffs.iter().map(|&c| qi(c)).collect())
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> Q {
        self.coeffs.get(i).cloned().unwrap_or_else(Q::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn scale(&self, c: &Q) -> Self {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly::from_coeffs(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn eval(&self, x: &Q) -> Q {
        let mut acc = Q::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + q_to_f64(c);
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        Poly::from_coeffs(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * qi(i as i64))
                .collect(),
        )
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Poly::one();
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    /// Synthetic division by `h - r`, returning quotient and remainder.
    pub fn div_linear(&self, r: &Q) -> (Poly, Q) {
        if self.coeffs.is_empty() {
            return (Poly::zero(), Q::zero());
        }
        let n = self.coeffs.len();
        let mut out = vec![Q::zero(); n - 1];
        let mut carry = Q::zero();
        for i in (0..n).rev() {
            let v = &self.coeffs[i] + &carry * r;
            if i == 0 {
                return (Poly::from_coeffs(out), v);
            }
            out[i - 1] = v.clone();
            carry = v;
        }
        unreachable!()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(q_to_f64).collect()
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::from_coeffs((0..n).map(|i| self.coeff(i) + o.coeff(i)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::from_coeffs((0..n).map(|i| self.coeff(i) - o.coeff(i)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![Q::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::from_coeffs(out)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly::from_coeffs(self.coeffs.iter().map(|c| -c).collect())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            let show_coeff = i == 0 || !mag.is_one();
            if show_coeff {
                write!(f, "{}", format_q(&mag))?;
                if i > 0 {
                    write!(f, "*")?;
                }
            }
            match i {
                0 => {}
                1 => write!(f, "h")?,
                _ => write!(f, "h^{i}")?,
            }
        }
        Ok(())
    }
}

/// `num / prod (h - r)^m`, kept canonical: no root of the denominator is a
/// root of the numerator, and zero has an empty denominator.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct PolyRat {
    num: Poly,
    den: BTreeMap<Q, u32>,
}

impl PolyRat {
    pub fn zero() -> Self {
        PolyRat::default()
    }

    pub fn one() -> Self {
        PolyRat::from_poly(Poly::one())
    }

    pub fn constant(c: Q) -> Self {
        PolyRat::from_poly(Poly::constant(c))
    }

    pub fn from_poly(num: Poly) -> Self {
        PolyRat {
            num,
            den: BTreeMap::new(),
        }
    }

    /// `num / prod (h - r)^m`, normalised.
    pub fn new(num: Poly, den: BTreeMap<Q, u32>) -> Self {
        let mut r = PolyRat { num, den };
        r.normalize();
        r
    }

    /// `1 / (h - r)^m`.
    pub fn inv_linear(r: Q, m: u32) -> Self {
        let mut den = BTreeMap::new();
        den.insert(r, m);
        PolyRat::new(Poly::one(), den)
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator_roots(&self) -> &BTreeMap<Q, u32> {
        &self.den
    }

    pub fn denominator(&self) -> Poly {
        let mut d = Poly::one();
        for (r, m) in &self.den {
            d = &d * &Poly::linear(r).pow(*m);
        }
        d
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_empty()
    }

    /// The polynomial itself, if the denominator is trivial.
    pub fn as_poly(&self) -> Option<&Poly> {
        self.den.is_empty().then_some(&self.num)
    }

    fn normalize(&mut self) {
        if self.num.is_zero() {
            self.den.clear();
            return;
        }
        let roots: Vec<Q> = self.den.keys().cloned().collect();
        for r in roots {
            loop {
                let m = self.den[&r];
                if m == 0 {
                    self.den.remove(&r);
                    break;
                }
                let (quot, rem) = self.num.div_linear(&r);
                if !rem.is_zero() {
                    break;
                }
                self.num = quot;
                if m == 1 {
                    self.den.remove(&r);
                    break;
                }
                self.den.insert(r.clone(), m - 1);
            }
        }
    }

    pub fn scale(&self, c: &Q) -> Self {
        if c.is_zero() {
            return PolyRat::zero();
        }
        PolyRat {
            num: self.num.scale(c),
            den: self.den.clone(),
        }
    }

    /// Multiply by `(h - r)^m`.
    pub fn mul_linear(&self, r: &Q, m: u32) -> Self {
        let mut den = self.den.clone();
        let mut num = self.num.clone();
        let mut left = m;
        if let Some(e) = den.get_mut(r) {
            let take = (*e).min(left);
            *e -= take;
            left -= take;
        }
        if left > 0 {
            num = &num * &Poly::linear(r).pow(left);
        }
        PolyRat::new(num, den)
    }

    /// Divide by `(h - r)^m`.
    pub fn div_linear(&self, r: &Q, m: u32) -> Self {
        let mut den = self.den.clone();
        *den.entry(r.clone()).or_insert(0) += m;
        PolyRat::new(self.num.clone(), den)
    }

    /// Divide by a polynomial that splits over the given roots:
    /// `p = lead * prod (h - r)`.
    pub fn div_split(&self, lead: &Q, roots: &[Q]) -> Self {
        let mut out = self.scale(&(Q::one() / lead));
        for r in roots {
            out = out.div_linear(r, 1);
        }
        out
    }

    pub fn eval(&self, x: &Q) -> Option<Q> {
        let mut d = Q::one();
        for (r, m) in &self.den {
            let f = x - r;
            if f.is_zero() {
                return None;
            }
            for _ in 0..*m {
                d *= &f;
            }
        }
        Some(self.num.eval(x) / d)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut d = 1.0;
        for (r, m) in &self.den {
            d *= (x - q_to_f64(r)).powi(*m as i32);
        }
        self.num.eval_f64(x) / d
    }

    pub fn derivative(&self) -> Self {
        let mut out = PolyRat {
            num: self.num.derivative(),
            den: self.den.clone(),
        };
        out.normalize();
        for (r, m) in &self.den {
            let mut den = self.den.clone();
            *den.get_mut(r).unwrap() += 1;
            let term = PolyRat::new(self.num.scale(&-qi(*m as i64)), den);
            out = &out + &term;
        }
        out
    }

    /// A float-coefficient copy for fast repeated evaluation.
    pub fn compile(&self) -> CompiledRat {
        CompiledRat {
            num: self.num.to_f64(),
            den: self.den.iter().map(|(r, m)| (q_to_f64(r), *m as i32)).collect(),
        }
    }
}

fn common_parts(a: &PolyRat, b: &PolyRat) -> (Poly, Poly, BTreeMap<Q, u32>) {
    let mut den = a.den.clone();
    for (r, m) in &b.den {
        let e = den.entry(r.clone()).or_insert(0);
        *e = (*e).max(*m);
    }
    let lift = |p: &PolyRat| {
        let mut num = p.num.clone();
        for (r, m) in &den {
            let have = p.den.get(r).copied().unwrap_or(0);
            if *m > have {
                num = &num * &Poly::linear(r).pow(m - have);
            }
        }
        num
    };
    (lift(a), lift(b), den)
}

impl Add for &PolyRat {
    type Output = PolyRat;
    fn add(self, o: &PolyRat) -> PolyRat {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        let (a, b, den) = common_parts(self, o);
        PolyRat::new(&a + &b, den)
    }
}

impl Sub for &PolyRat {
    type Output = PolyRat;
    fn sub(self, o: &PolyRat) -> PolyRat {
        self + &(-o)
    }
}

impl Mul for &PolyRat {
    type Output = PolyRat;
    fn mul(self, o: &PolyRat) -> PolyRat {
        if self.is_zero() || o.is_zero() {
            return PolyRat::zero();
        }
        let mut den = self.den.clone();
        for (r, m) in &o.den {
            *den.entry(r.clone()).or_insert(0) += m;
        }
        PolyRat::new(&self.num * &o.num, den)
    }
}

impl Neg for &PolyRat {
    type Output = PolyRat;
    fn neg(self) -> PolyRat {
        PolyRat {
            num: -&self.num,
            den: self.den.clone(),
        }
    }
}

impl From<Poly> for PolyRat {
    fn from(p: Poly) -> Self {
        PolyRat::from_poly(p)
    }
}

impl fmt::Display for PolyRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_empty() {
            return write!(f, "{}", self.num);
        }
        write!(f, "({})/(", self.num)?;
        for (idx, (r, m)) in self.den.iter().enumerate() {
            if idx > 0 {
                write!(f, "*")?;
            }
            let base = Poly::linear(r);
            if *m == 1 {
                write!(f, "({base})")?;
            } else {
                write!(f, "({base})^{m}")?;
            }
        }
        write!(f, ")")
    }
}

/// Serialised form: numerator coefficients as `"p/q"` strings, ascending,
/// and the denominator as root/multiplicity pairs.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct PolyRatJson {
    pub num: Vec<String>,
    pub den: Vec<(String, u32)>,
}

impl From<&PolyRat> for PolyRatJson {
    fn from(p: &PolyRat) -> Self {
        PolyRatJson {
            num: p.num.coeffs.iter().map(format_q).collect(),
            den: p.den.iter().map(|(r, m)| (format_q(r), *m)).collect(),
        }
    }
}

impl TryFrom<&PolyRatJson> for PolyRat {
    type Error = String;
    fn try_from(j: &PolyRatJson) -> Result<Self, String> {
        let num = j
            .num
            .iter()
            .map(|s| parse_q(s).ok_or_else(|| format!("bad rational {s:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut den = BTreeMap::new();
        for (s, m) in &j.den {
            let r = parse_q(s).ok_or_else(|| format!("bad rational {s:?}"))?;
            *den.entry(r).or_insert(0) += m;
        }
        Ok(PolyRat::new(Poly::from_coeffs(num), den))
    }
}

/// Float image of a [`PolyRat`].
#[derive(Clone, Debug)]
pub struct CompiledRat {
    num: Vec<f64>,
    den: Vec<(f64, i32)>,
}

impl CompiledRat {
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.num.iter().rev() {
            acc = acc * x + c;
        }
        let mut d = 1.0;
        for (r, m) in &self.den {
            d *= (x - r).powi(*m);
        }
        acc / d
    }
}
