//! Reduction against quadrature and the Picard–Fuchs derivative identity.

use pfab::picard_fuchs::{pf_check, pf_system};
use pfab::quadrature::integral_i;
use pfab::reduction::{quadrature_basis_values, reduce_integral, IntegralIndex};
use pfab::symfield::ClosedBasis;
use pfab::systems::{make_system, SystemKind};
use proptest::prelude::*;

fn reachable(kind: SystemKind) -> Vec<IntegralIndex> {
    let sys = make_system(kind);
    let mut out = Vec::new();
    for twice_i in -2..=10 {
        if !kind.is_half_integer() && twice_i % 2 != 0 {
            continue;
        }
        for j in 0..=5u32 {
            let idx = IntegralIndex::half(twice_i, j);
            if idx.i_f64() + j as f64 <= 5.0 && reduce_integral(&sys, idx).is_ok() {
                out.push(idx);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reduction_matches_quadrature(kind in prop::sample::select(SystemKind::ALL.to_vec()), pick in 0usize..1000, t in 0.05f64..0.95) {
        let sys = make_system(kind);
        let idxs = reachable(kind);
        let idx = idxs[pick % idxs.len()];
        let h = match kind {
            SystemKind::S1 => 0.1 + 10.0 * t,
            SystemKind::S2 => t,
            _ => 1.0 / 64.0 + t,
        };
        let combo = reduce_integral(&sys, idx).unwrap();
        let v = combo.evaluate(h, &quadrature_basis_values(&sys, h).unwrap());
        let q = integral_i(&sys, h, idx).unwrap();
        prop_assert!((v - q).abs() <= 1e-8 * q.abs(), "{} at h={}: {} vs {}", idx, h, v, q);
    }

    /// `I_{i,j} = I'_{i-k,j+2} / (j + 2)`.
    #[test]
    fn derivative_identity(kind in prop::sample::select(SystemKind::ALL.to_vec()), twice_i in 0i32..6, j in 0u32..3, t in 0.1f64..0.9) {
        let sys = make_system(kind);
        let twice_k = (2.0 * sys.k_f64()) as i32;
        let twice_i = if kind.is_half_integer() { twice_i } else { 2 * (twice_i / 2) };
        let h = match kind {
            SystemKind::S1 => 0.2 + 5.0 * t,
            SystemKind::S2 => 0.1 + 0.8 * t,
            _ => 0.02 + t,
        };
        let lifted = IntegralIndex::half(twice_i - twice_k, j + 2);
        let s = 1e-3 * h.min(1.0 - h).abs().max(1e-3);
        let f = |x: f64| integral_i(&sys, x, lifted).unwrap();
        let d = (f(h - 2.0 * s) - 8.0 * f(h - s) + 8.0 * f(h + s) - f(h + 2.0 * s)) / (12.0 * s);
        let lhs = integral_i(&sys, h, IntegralIndex::half(twice_i, j)).unwrap();
        prop_assert!((lhs - d / (j as f64 + 2.0)).abs() <= 1e-6 * lhs.abs(), "{} vs {}", lhs, d / (j as f64 + 2.0));
    }
}

#[test]
fn closed_forms_reproduce_quadrature() {
    for kind in SystemKind::ALL {
        let sys = make_system(kind);
        for ann in &sys.sigma {
            let cb = ClosedBasis::fit_default(&sys, ann.branch).unwrap();
            let h = if ann.hi.is_finite() && ann.lo.is_finite() {
                0.3 * ann.lo + 0.7 * ann.hi
            } else if ann.lo.is_finite() {
                ann.lo + 2.5
            } else {
                ann.hi - 2.5
            };
            let q = quadrature_basis_values(&sys, h).unwrap();
            let c = cb.values(h);
            for (id, v) in &q.values {
                assert!((c.values[id] - v).abs() <= 1e-9 * v.abs(), "{kind} {}", id.label());
            }
        }
    }
}

#[test]
fn pf_residuals_are_small() {
    for kind in SystemKind::ALL {
        let worst = pf_check(&make_system(kind), 6).unwrap().iter().map(|r| r.residual).fold(0.0f64, f64::max);
        assert!(worst <= 1e-6, "{kind}: {worst}");
        assert_eq!(pf_system(kind).matrix.len(), pf_system(kind).basis.len());
    }
}
