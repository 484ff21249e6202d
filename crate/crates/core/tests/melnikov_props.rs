//! k-map structure, closed Melnikov functions and zero ceilings.

use pfab::melnikov::{
    bound_for, decompose_k, fitted_constants, k_jacobian, k_map, k_map_with, melnikov_closed, MelnikovFunction,
    KVector,
};
use pfab::quadrature::melnikov_quadrature;
use pfab::symfield::basis_family;
use pfab::systems::{make_system, Branch, Perturbation, SystemKind};
use pfab::zeros::count_zeros;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quadratic_case() -> impl Strategy<Value = (SystemKind, Branch, u64)> {
    prop_oneof![
        Just((SystemKind::S1, Branch::Main)),
        Just((SystemKind::S1, Branch::Negative)),
        Just((SystemKind::S2, Branch::Main)),
    ]
    .prop_flat_map(|(k, b)| (Just(k), Just(b), any::<u64>()))
}

fn random_pert(seed: u64, n: u32, smooth: bool) -> Perturbation {
    Perturbation::random(n, smooth, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn combine(a: &Perturbation, b: &Perturbation, s: f64) -> Perturbation {
    let mut out = a.clone();
    for part in [pfab::systems::Part::APlus, pfab::systems::Part::AMinus, pfab::systems::Part::BPlus, pfab::systems::Part::BMinus] {
        for i in 0..=a.n {
            for j in 0..=a.n - i {
                out.set(part, i, j, a.get(part, i, j) + s * b.get(part, i, j)).unwrap();
            }
        }
    }
    out
}

fn sample_h(kind: SystemKind, branch: Branch, t: f64) -> f64 {
    match (kind, branch) {
        (SystemKind::S2, _) => 0.05 + 0.9 * t,
        (_, Branch::Negative) => -1.05 - 6.0 * t,
        _ => 0.05 + 6.0 * t,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn k_map_is_linear((kind, branch, seed) in quadratic_case(), s in -3.0f64..3.0) {
        let a = random_pert(seed, 2, false);
        let b = random_pert(seed ^ 0xabcd, 2, false);
        let ka = k_map_with(kind, branch, 1.3, -0.7, &a).k;
        let kb = k_map_with(kind, branch, 1.3, -0.7, &b).k;
        let kc = k_map_with(kind, branch, 1.3, -0.7, &combine(&a, &b, s)).k;
        for i in 0..ka.len() {
            prop_assert!((kc[i] - ka[i] - s * kb[i]).abs() <= 1e-12 * (1.0 + ka[i].abs() + kb[i].abs() * s.abs()));
        }
    }

    /// The k-map read from the closed-form coefficients agrees with the
    /// one read from the reducer, and both reproduce quadrature.
    #[test]
    fn closed_melnikov_matches_quadrature((kind, branch, seed) in quadratic_case(), t in 0.0f64..1.0) {
        let sys = make_system(kind);
        let pert = random_pert(seed, 2, false);
        let kv = k_map(&sys, branch, &pert).unwrap();
        let dec = decompose_k(&sys, branch, &pert).unwrap();
        prop_assert!(dec.residual <= 1e-12);
        let scale = kv.k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in kv.k.iter().zip(&dec.k) {
            prop_assert!((a - b).abs() <= 1e-9 * scale, "{:?} vs {:?}", kv.k, dec.k);
        }
        let h = sample_h(kind, branch, t);
        let closed = melnikov_closed(&kv).evaluate(h);
        let q = melnikov_quadrature(&sys, &pert, h).unwrap();
        let mag = MelnikovFunction::new(&sys, &pert).unwrap().evaluate(h);
        prop_assert!((closed - q).abs() <= 1e-8 * (q.abs() + scale), "{} vs {}", closed, q);
        prop_assert!((mag - q).abs() <= 1e-8 * (q.abs() + scale), "{} vs {}", mag, q);
    }

    /// A generic point of the family has no more zeros than the family has
    /// members less one.
    #[test]
    fn family_combinations_respect_the_chebyshev_count((kind, branch, seed) in quadratic_case()) {
        let fam = basis_family(kind, branch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k: Vec<f64> = (0..fam.len()).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let e = melnikov_closed(&KVector { kind, branch, k, c1: 1.0, c2: 1.0 });
        let sys = make_system(kind);
        let ann = sys.sigma.iter().find(|a| a.branch == branch).unwrap();
        let rep = count_zeros(|h| e.evaluate(h), (ann.lo, ann.hi), 2048).unwrap();
        prop_assert!(rep.count < fam.len(), "{} zeros", rep.count);
    }
}

#[test]
fn k_jacobian_determinants() {
    for (kind, branch) in [(SystemKind::S1, Branch::Main), (SystemKind::S1, Branch::Negative), (SystemKind::S2, Branch::Main)] {
        let (c1, c2) = fitted_constants(&make_system(kind), branch).unwrap();
        let det = k_jacobian(kind, branch, c1, c2).determinant();
        let want = match kind {
            SystemKind::S1 => 0.5 * c1.powi(4) * c2.powi(2),
            _ => 16.0 * c1.powi(3) * c2.powi(4),
        };
        assert!((det.abs() - want.abs()).abs() <= 1e-10 * want.abs(), "{kind} {branch:?}: {det} vs {want}");
    }
}

#[test]
fn smooth_s1_kills_odd_family_members() {
    let sys = make_system(SystemKind::S1);
    for seed in 0..10 {
        let pert = random_pert(seed, 2, true);
        for branch in [Branch::Main, Branch::Negative] {
            let k = k_map(&sys, branch, &pert).unwrap().k;
            let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in [1, 3, 4, 5] {
                assert!(k[i].abs() <= 1e-14 * scale, "seed {seed} k{i} = {}", k[i]);
            }
        }
    }
}

#[test]
fn zero_perturbation_is_identically_zero() {
    for kind in SystemKind::ALL {
        let m = MelnikovFunction::new(&make_system(kind), &Perturbation::zero(3)).unwrap();
        assert!(m.is_identically_zero());
        assert!(m.zeros(256).unwrap().iter().all(|r| r.identically_zero && r.count == 0));
    }
}

#[test]
fn ceilings_follow_the_piecewise_table() {
    use SystemKind::*;
    let table = [
        (S1, false, [30, 34, 38, 42, 46, 50]),
        (S2, false, [2, 6, 16, 26, 36, 46]),
        (R19, false, [11, 11, 11, 11, 13, 17]),
        (R20, false, [8, 8, 8, 15, 19, 23]),
        (S1, true, [0, 2, 4, 6, 8, 10]),
        (S2, true, [1, 1, 3, 5, 7, 9]),
        (R19, true, [4, 4, 4, 4, 5, 7]),
        (R20, true, [3, 3, 3, 6, 8, 10]),
    ];
    for (kind, smooth, want) in table {
        for (n, &w) in want.iter().enumerate() {
            assert_eq!(bound_for(kind, n as i64, smooth).unwrap(), w, "{kind} n={n} smooth={smooth}");
        }
    }
    assert!(bound_for(S1, -1, false).is_err());
}
