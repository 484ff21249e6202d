//! The four quadratic isochronous centers, their first integrals
//! `H = x^{-k} (y^2/2 + l2 x^2 + l1 x + l0)`, period annuli and the
//! discontinuously perturbed vector fields.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{q, q_to_f64, qi, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SystemKind {
    S1,
    S2,
    R19,
    R20,
}

impl SystemKind {
    pub const ALL: [SystemKind; 4] = [SystemKind::S1, SystemKind::S2, SystemKind::R19, SystemKind::R20];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::S1 => "S1",
            SystemKind::S2 => "S2",
            SystemKind::R19 => "r19",
            SystemKind::R20 => "r20",
        }
    }

    /// True for the two systems whose first integral has a half-integer
    /// exponent (and hence a logarithmic generating integral).
    pub fn is_half_integer(self) -> bool {
        matches!(self, SystemKind::R19 | SystemKind::R20)
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s1" => Ok(SystemKind::S1),
            "s2" => Ok(SystemKind::S2),
            "r19" => Ok(SystemKind::R19),
            "r20" => Ok(SystemKind::R20),
            _ => Err(Error::UnknownSystem(s.to_string())),
        }
    }
}

/// Which period annulus. Only S1 has two: the ovals around `(1,0)` (main)
/// and around `(-1,0)` (negative energies, `x < 0`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    Main,
    Negative,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Main => "main",
            Branch::Negative => "negative",
        })
    }
}

/// One open energy interval filled by closed ovals.
#[derive(Clone, Debug, PartialEq)]
pub struct Annulus {
    pub branch: Branch,
    pub lo: f64,
    pub hi: f64,
    /// Energy of the center bounding this annulus; equals `lo` or `hi`.
    pub center_h: f64,
    /// x-coordinate of that center.
    pub center_x: f64,
}

/// Relative gap below which an energy counts as sitting on the boundary.
pub const BOUNDARY_CUTOFF: f64 = 1e-9;

impl Annulus {
    pub fn contains(&self, h: f64) -> bool {
        h > self.lo && h < self.hi
    }

    /// Rejects energies outside the interval or within the cutoff of an end.
    pub fn check(&self, h: f64) -> Result<()> {
        for b in [self.lo, self.hi] {
            if b.is_finite() && (h - b).abs() < BOUNDARY_CUTOFF * b.abs().max(1.0) {
                return Err(Error::NearBoundary {
                    h,
                    boundary: b,
                    tol: BOUNDARY_CUTOFF,
                });
            }
        }
        Ok(())
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Center {
    pub x: f64,
    pub y: f64,
    pub h: Q,
}

#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub k: Q,
    pub lambda0: Q,
    pub lambda1: Q,
    pub lambda2: Q,
    pub sigma: Vec<Annulus>,
    pub centers: Vec<Center>,
    /// Exponent of `x` in the integrating factor (metadata only).
    pub mu_exponent: Q,
    kf: f64,
    l: [f64; 3],
}

pub fn make_system(kind: SystemKind) -> SystemSpec {
    let (k, l0, l1, l2) = match kind {
        SystemKind::S1 => (qi(1), q(1, 4), q(-1, 2), q(1, 4)),
        SystemKind::S2 => (qi(2), qi(1), qi(-2), qi(1)),
        SystemKind::R19 => (q(3, 2), Q::zero(), q(1, 128), q(1, 128)),
        SystemKind::R20 => (q(1, 2), q(1, 128), q(1, 128), Q::zero()),
    };
    let (sigma, centers) = match kind {
        SystemKind::S1 => (
            vec![
                Annulus {
                    branch: Branch::Negative,
                    lo: f64::NEG_INFINITY,
                    hi: -1.0,
                    center_h: -1.0,
                    center_x: -1.0,
                },
                Annulus {
                    branch: Branch::Main,
                    lo: 0.0,
                    hi: f64::INFINITY,
                    center_h: 0.0,
                    center_x: 1.0,
                },
            ],
            vec![
                Center { x: -1.0, y: 0.0, h: qi(-1) },
                Center { x: 1.0, y: 0.0, h: Q::zero() },
            ],
        ),
        SystemKind::S2 => (
            vec![Annulus {
                branch: Branch::Main,
                lo: 0.0,
                hi: 1.0,
                center_h: 0.0,
                center_x: 1.0,
            }],
            vec![Center { x: 1.0, y: 0.0, h: Q::zero() }],
        ),
        SystemKind::R19 | SystemKind::R20 => (
            vec![Annulus {
                branch: Branch::Main,
                lo: 1.0 / 64.0,
                hi: f64::INFINITY,
                center_h: 1.0 / 64.0,
                center_x: 1.0,
            }],
            vec![Center { x: 1.0, y: 0.0, h: q(1, 64) }],
        ),
    };
    let mu_exponent = -&k - Q::one();
    SystemSpec {
        kind,
        kf: q_to_f64(&k),
        l: [q_to_f64(&l0), q_to_f64(&l1), q_to_f64(&l2)],
        k,
        lambda0: l0,
        lambda1: l1,
        lambda2: l2,
        sigma,
        centers,
        mu_exponent,
    }
}

impl SystemSpec {
    pub fn k_f64(&self) -> f64 {
        self.kf
    }

    /// `(l0, l1, l2)` as floats.
    pub fn lambdas_f64(&self) -> [f64; 3] {
        self.l
    }

    /// `x^p` where `p` may be half-integer; negative `x` only for integer `p`.
    pub fn xpow(&self, x: f64, p: f64) -> Result<f64> {
        if x > 0.0 {
            Ok(x.powf(p))
        } else if x < 0.0 && p.fract() == 0.0 {
            Ok(x.powi(p as i32))
        } else {
            Err(Error::BadX {
                system: self.kind.name().into(),
                x,
            })
        }
    }

    fn check_x(&self, x: f64) -> Result<()> {
        let ok = if self.kind == SystemKind::S1 { x != 0.0 } else { x > 0.0 };
        if ok && x.is_finite() {
            Ok(())
        } else {
            Err(Error::BadX {
                system: self.kind.name().into(),
                x,
            })
        }
    }

    pub fn hamiltonian(&self, x: f64, y: f64) -> Result<f64> {
        self.check_x(x)?;
        let [l0, l1, l2] = self.l;
        Ok(self.xpow(x, -self.kf)? * (0.5 * y * y + l2 * x * x + l1 * x + l0))
    }

    /// `phi(x) = h x^k - l2 x^2 - l1 x - l0`, which equals `y^2/2` on the level set.
    pub fn half_energy(&self, h: f64, x: f64) -> Result<f64> {
        self.check_x(x)?;
        let [l0, l1, l2] = self.l;
        Ok(h * self.xpow(x, self.kf)? - l2 * x * x - l1 * x - l0)
    }

    /// `phi'(x)`.
    pub fn half_energy_dx(&self, h: f64, x: f64) -> Result<f64> {
        self.check_x(x)?;
        let [_, l1, l2] = self.l;
        Ok(self.kf * h * self.xpow(x, self.kf - 1.0)? - 2.0 * l2 * x - l1)
    }

    pub fn annulus(&self, branch: Branch) -> Result<&Annulus> {
        self.sigma.iter().find(|a| a.branch == branch).ok_or_else(|| {
            Error::Unsupported(format!("{} has no {branch} annulus", self.kind))
        })
    }

    /// The annulus containing `h`, after the boundary cutoff check.
    pub fn annulus_of(&self, h: f64) -> Result<&Annulus> {
        let a = self
            .sigma
            .iter()
            .find(|a| a.contains(h))
            .ok_or_else(|| Error::OutsideAnnulus {
                system: self.kind.name().into(),
                h,
            })?;
        a.check(h)?;
        Ok(a)
    }

    /// Unperturbed field.
    pub fn base_field(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = std::f64::consts::SQRT_2;
        match self.kind {
            SystemKind::S1 => (r2 * x * y, r2 / 4.0 * (1.0 - x * x + 2.0 * y * y)),
            SystemKind::S2 => (r2 / 2.0 * x * y, r2 / 2.0 * (2.0 - 2.0 * x + y * y)),
            SystemKind::R19 => (-x * y, -0.75 * y * y + x * x / 256.0 - x / 256.0),
            SystemKind::R20 => (-x * y, -0.25 * y * y + x / 256.0 - 1.0 / 256.0),
        }
    }

    /// Perturbed piecewise field: the `side` half-plane uses `(f^±, g^±)`.
    pub fn vector_field(&self, side: Side, eps: f64, pert: &Perturbation, x: f64, y: f64) -> (f64, f64) {
        let (u, v) = self.base_field(x, y);
        if eps == 0.0 {
            return (u, v);
        }
        let (f, g) = pert.eval(side, x, y);
        (u + eps * f, v + eps * g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Upper,
    Lower,
}

impl FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "upper" | "+" => Ok(Side::Upper),
            "lower" | "-" => Ok(Side::Lower),
            _ => Err(Error::InvalidArgument(format!("unknown side {s:?}"))),
        }
    }
}

pub type Coeffs = BTreeMap<(u32, u32), f64>;

/// Which of the four coefficient tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Part {
    APlus,
    AMinus,
    BPlus,
    BMinus,
}

/// `f^± = sum a^±_{ij} x^i y^j` perturbs `x'`, `g^± = sum b^±_{ij} x^i y^j`
/// perturbs `y'`; `+` above the switching line `y = 0`, `-` below.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Perturbation {
    pub n: u32,
    pub a_plus: Coeffs,
    pub a_minus: Coeffs,
    pub b_plus: Coeffs,
    pub b_minus: Coeffs,
}

impl Perturbation {
    pub fn zero(n: u32) -> Self {
        Perturbation {
            n,
            ..Default::default()
        }
    }

    pub fn table(&self, part: Part) -> &Coeffs {
        match part {
            Part::APlus => &self.a_plus,
            Part::AMinus => &self.a_minus,
            Part::BPlus => &self.b_plus,
            Part::BMinus => &self.b_minus,
        }
    }

    fn table_mut(&mut self, part: Part) -> &mut Coeffs {
        match part {
            Part::APlus => &mut self.a_plus,
            Part::AMinus => &mut self.a_minus,
            Part::BPlus => &mut self.b_plus,
            Part::BMinus => &mut self.b_minus,
        }
    }

    pub fn get(&self, part: Part, i: u32, j: u32) -> f64 {
        self.table(part).get(&(i, j)).copied().unwrap_or(0.0)
    }

    /// Stores a coefficient; zero values are dropped.
    pub fn set(&mut self, part: Part, i: u32, j: u32, v: f64) -> Result<()> {
        if i + j > self.n {
            return Err(Error::InvalidPerturbation(format!(
                "index ({i},{j}) exceeds degree {}",
                self.n
            )));
        }
        if !v.is_finite() {
            return Err(Error::InvalidPerturbation(format!("coefficient ({i},{j}) is not finite")));
        }
        let t = self.table_mut(part);
        if v == 0.0 {
            t.remove(&(i, j));
        } else {
            t.insert((i, j), v);
        }
        Ok(())
    }

    pub fn is_smooth(&self) -> bool {
        self.a_plus == self.a_minus && self.b_plus == self.b_minus
    }

    pub fn is_zero(&self) -> bool {
        self.a_plus.is_empty() && self.a_minus.is_empty() && self.b_plus.is_empty() && self.b_minus.is_empty()
    }

    /// Checks the degree invariant on every stored index.
    pub fn validate(&self) -> Result<()> {
        for part in [Part::APlus, Part::AMinus, Part::BPlus, Part::BMinus] {
            for (&(i, j), v) in self.table(part) {
                if i + j > self.n {
                    return Err(Error::InvalidPerturbation(format!(
                        "index ({i},{j}) exceeds degree {}",
                        self.n
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidPerturbation(format!("coefficient ({i},{j}) is not finite")));
                }
            }
        }
        Ok(())
    }

    /// Coefficients uniform in `[-1, 1]` for every admissible index; the
    /// smooth variant copies the upper tables to the lower ones.
    pub fn random<R: Rng>(n: u32, smooth: bool, rng: &mut R) -> Self {
        let mut p = Perturbation::zero(n);
        for part in [Part::APlus, Part::AMinus, Part::BPlus, Part::BMinus] {
            if smooth && matches!(part, Part::AMinus | Part::BMinus) {
                continue;
            }
            for d in 0..=n {
                for i in 0..=d {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    p.set(part, i, d - i, v).expect("index within degree");
                }
            }
        }
        if smooth {
            p.a_minus = p.a_plus.clone();
            p.b_minus = p.b_plus.clone();
        }
        p
    }

    /// `(f^±(x,y), g^±(x,y))`.
    pub fn eval(&self, side: Side, x: f64, y: f64) -> (f64, f64) {
        let (a, b) = match side {
            Side::Upper => (&self.a_plus, &self.b_plus),
            Side::Lower => (&self.a_minus, &self.b_minus),
        };
        let mono = |t: &Coeffs| t.iter().map(|(&(i, j), c)| c * x.powi(i as i32) * y.powi(j as i32)).sum::<f64>();
        (mono(a), mono(b))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let table = |t: &Coeffs| {
            let m: serde_json::Map<String, serde_json::Value> = t
                .iter()
                .map(|(&(i, j), v)| (format!("{i},{j}"), serde_json::json!(v)))
                .collect();
            serde_json::Value::Object(m)
        };
        serde_json::json!({
            "n": self.n,
            "a+": table(&self.a_plus),
            "a-": table(&self.a_minus),
            "b+": table(&self.b_plus),
            "b-": table(&self.b_minus),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("serializable")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: PertJson = serde_json::from_str(s)?;
        let mut p = Perturbation::zero(raw.n);
        for (part, table) in [
            (Part::APlus, raw.a_plus),
            (Part::AMinus, raw.a_minus),
            (Part::BPlus, raw.b_plus),
            (Part::BMinus, raw.b_minus),
        ] {
            for (key, v) in table {
                let (i, j) = parse_pair(&key)?;
                p.set(part, i, j, v)?;
            }
        }
        Ok(p)
    }
}

fn parse_pair(key: &str) -> Result<(u32, u32)> {
    let bad = || Error::InvalidPerturbation(format!("bad index key {key:?} (expected \"i,j\")"));
    let (a, b) = key.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

#[derive(Deserialize)]
struct PertJson {
    n: u32,
    #[serde(rename = "a+", default)]
    a_plus: BTreeMap<String, f64>,
    #[serde(rename = "a-", default)]
    a_minus: BTreeMap<String, f64>,
    #[serde(rename = "b+", default)]
    b_plus: BTreeMap<String, f64>,
    #[serde(rename = "b-", default)]
    b_minus: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_sit_on_annulus_boundaries() {
        for kind in SystemKind::ALL {
            let s = make_system(kind);
            for c in &s.centers {
                let h = s.hamiltonian(c.x, c.y).unwrap();
                assert!((h - q_to_f64(&c.h)).abs() < 1e-15);
                assert!(s.sigma.iter().any(|a| a.center_h == h && (a.lo == h || a.hi == h)));
            }
        }
    }

    #[test]
    fn half_energy_examples() {
        let s1 = make_system(SystemKind::S1);
        assert_eq!(s1.half_energy(1.0, 1.0).unwrap(), 1.0);
        let r19 = make_system(SystemKind::R19);
        assert!((r19.half_energy(1.0 / 32.0, 1.0).unwrap() - 1.0 / 64.0).abs() < 1e-16);
    }

    #[test]
    fn rejects_bad_x() {
        let r19 = make_system(SystemKind::R19);
        assert!(r19.hamiltonian(-1.0, 0.0).is_err());
        let s1 = make_system(SystemKind::S1);
        assert!(s1.hamiltonian(0.0, 1.0).is_err());
        assert_eq!(s1.hamiltonian(-1.0, 0.0).unwrap(), -1.0);
    }

    #[test]
    fn pert_json_round_trip() {
        let mut p = Perturbation::zero(2);
        p.set(Part::APlus, 1, 0, 0.5).unwrap();
        p.set(Part::BMinus, 0, 2, -1.25).unwrap();
        let back = Perturbation::from_json_str(&p.to_json_string()).unwrap();
        assert_eq!(back, p);
        assert!(Perturbation::from_json_str(r#"{"n":1,"a+":{"1,1":1.0}}"#).is_err());
    }

    #[test]
    fn annulus_lookup() {
        let s1 = make_system(SystemKind::S1);
        assert_eq!(s1.annulus_of(2.0).unwrap().branch, Branch::Main);
        assert_eq!(s1.annulus_of(-3.0).unwrap().branch, Branch::Negative);
        assert!(s1.annulus_of(-0.5).is_err());
        assert!(matches!(s1.annulus_of(1e-12), Err(Error::NearBoundary { .. })));
    }
}
