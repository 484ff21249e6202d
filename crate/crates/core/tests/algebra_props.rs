//! Exact polynomial arithmetic and the differential field.

use pfab::poly::{q, qi, Poly, PolyRat, Q};
use pfab::symfield::{basis_family, differentiate, wronskian, FieldElem};
use pfab::systems::{Branch, SystemKind};
use proptest::prelude::*;

fn small_q() -> impl Strategy<Value = Q> {
    (-20i64..=20, 1i64..=6).prop_map(|(p, d)| q(p, d))
}

fn poly() -> impl Strategy<Value = Poly> {
    prop::collection::vec(small_q(), 0..5).prop_map(Poly::from_coeffs)
}

fn rat() -> impl Strategy<Value = PolyRat> {
    (poly(), prop::sample::select(vec![qi(0), qi(-1), q(-1, 2), qi(1)]), 0u32..3)
        .prop_map(|(p, r, m)| PolyRat::from_poly(p).div_linear(&r, m))
}

fn kind() -> impl Strategy<Value = SystemKind> {
    prop::sample::select(SystemKind::ALL.to_vec())
}

/// A random element: combination of family members with small rational
/// polynomial coefficients.
fn elem(k: SystemKind) -> impl Strategy<Value = FieldElem> {
    let fam = basis_family(k, Branch::Main);
    prop::collection::vec(poly(), fam.len()).prop_map(move |cs| {
        cs.iter()
            .zip(&fam)
            .fold(FieldElem::zero(k), |acc, (c, f)| acc.add(&f.scale(&PolyRat::from_poly(c.clone()))))
    })
}

fn sample_h(k: SystemKind) -> f64 {
    match k {
        SystemKind::S1 => 1.7,
        SystemKind::S2 => 0.37,
        SystemKind::R19 | SystemKind::R20 => 0.9,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polyrat_ring_laws(a in rat(), b in rat(), c in rat()) {
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert!((&(&a + &b) - &b) == a);
    }

    #[test]
    fn polyrat_evaluation_is_a_homomorphism(a in rat(), b in rat(), x in (1i64..50).prop_map(|n| q(2 * n + 1, 14))) {
        let (va, vb) = (a.eval(&x).unwrap(), b.eval(&x).unwrap());
        prop_assert_eq!((&a * &b).eval(&x).unwrap(), &va * &vb);
        prop_assert_eq!((&a + &b).eval(&x).unwrap(), va + vb);
    }

    #[test]
    fn polyrat_derivative_obeys_leibniz(a in rat(), b in rat()) {
        let lhs = (&a * &b).derivative();
        let rhs = &(&a.derivative() * &b) + &(&a * &b.derivative());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn field_derivative_is_linear_and_leibniz((k, a, b) in kind().prop_flat_map(|k| (Just(k), elem(k), elem(k)))) {
        let h = sample_h(k);
        let lin = differentiate(&a.add(&b)).sub(&differentiate(&a).add(&differentiate(&b)));
        prop_assert!(lin.is_zero());
        let lhs = differentiate(&a.mul(&b));
        let rhs = differentiate(&a).mul(&b).add(&a.mul(&differentiate(&b)));
        let scale = lhs.term_values(h).iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!((lhs.evaluate(h) - rhs.evaluate(h)).abs() <= 1e-11 * scale);
    }

    #[test]
    fn symbolic_derivative_matches_finite_difference((k, a) in kind().prop_flat_map(|k| (Just(k), elem(k)))) {
        let h = sample_h(k);
        let d = differentiate(&a).evaluate_precise(h);
        let s = 1e-4 * h;
        let fd = (a.evaluate_precise(h - 2.0 * s) - 8.0 * a.evaluate_precise(h - s)
            + 8.0 * a.evaluate_precise(h + s) - a.evaluate_precise(h + 2.0 * s)) / (12.0 * s);
        let scale = differentiate(&a).term_values(h).iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!((d - fd).abs() <= 1e-6 * scale.max(1.0), "{} vs {}", d, fd);
    }
}

#[test]
fn first_wronskian_is_first_member() {
    for k in SystemKind::ALL {
        let fam = basis_family(k, Branch::Main);
        let w1 = wronskian(&fam, 1);
        assert!(w1.sub(&fam[0]).is_zero(), "{k}");
    }
}

#[test]
fn wronskian_of_powers() {
    // W(1, h, h^2) = 2
    let k = SystemKind::S1;
    let fam: Vec<FieldElem> = (0..3).map(|e| FieldElem::poly(k, Poly::h().pow(e))).collect();
    let w = wronskian(&fam, 3);
    assert!(w.sub(&FieldElem::constant(k, qi(2))).is_zero());
}
