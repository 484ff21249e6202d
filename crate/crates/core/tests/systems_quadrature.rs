//! First integrals, oval geometry and generating integrals.

use pfab::quadrature::{integral_dy, integral_i, oval_endpoints};
use pfab::reduction::IntegralIndex;
use pfab::systems::{make_system, Annulus, Branch, SystemKind, SystemSpec};
use proptest::prelude::*;

/// Maps `t` in (0, 1) into the annulus, spreading over many decades when
/// it is unbounded.
fn energy_in(ann: &Annulus, t: f64) -> f64 {
    match (ann.lo.is_finite(), ann.hi.is_finite()) {
        (true, true) => ann.lo + (ann.hi - ann.lo) * (0.02 + 0.96 * t),
        (true, false) => ann.lo + ann.lo.abs().max(1.0) * 10f64.powf(-2.0 + 4.0 * t),
        _ => ann.hi - ann.hi.abs().max(1.0) * 10f64.powf(-2.0 + 4.0 * t),
    }
}

fn case() -> impl Strategy<Value = (SystemSpec, Annulus, f64)> {
    (prop::sample::select(SystemKind::ALL.to_vec()), 0usize..2, 0.0f64..1.0).prop_map(|(k, a, t)| {
        let sys = make_system(k);
        let ann = sys.sigma[a % sys.sigma.len()].clone();
        let h = energy_in(&ann, t);
        (sys, ann, h)
    })
}

fn grad_h(sys: &SystemSpec, x: f64, y: f64) -> (f64, f64) {
    let k = sys.k_f64();
    let [l0, l1, l2] = sys.lambdas_f64();
    let inner = y * y / 2.0 + l2 * x * x + l1 * x + l0;
    let xk = x.abs().powf(-k);
    (-k / x * xk * inner + xk * (2.0 * l2 * x + l1), xk * y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn half_energy_has_two_roots_around_the_center((sys, ann, h) in case()) {
        let geo = oval_endpoints(&sys, h).unwrap();
        prop_assert!(geo.x1 < ann.center_x && ann.center_x < geo.x2);
        prop_assert!(sys.half_energy(h, ann.center_x).unwrap() > 0.0);
        for x in [geo.x1, geo.x2] {
            let scale = sys.half_energy_dx(h, x).unwrap().abs() * x.abs().max(1e-300);
            prop_assert!(sys.half_energy(h, x).unwrap().abs() <= 1e-9 * scale);
            prop_assert!(sys.half_energy_dx(h, x).unwrap() != 0.0);
        }
        let outside = |x: f64| sys.half_energy(h, x).map(|v| v < 0.0).unwrap_or(true);
        prop_assert!(outside(geo.x1 - 1e-6 * geo.width()));
        prop_assert!(outside(geo.x2 + 1e-6 * geo.width()));
    }

    #[test]
    fn hamiltonian_is_conserved_by_the_unperturbed_field((sys, _ann, h) in case(), t in 0.01f64..1.56) {
        let geo = oval_endpoints(&sys, h).unwrap();
        let p = geo.point(&sys, t);
        for y in [p.y, -p.y] {
            let (u, v) = sys.base_field(p.x, y);
            let (hx, hy) = grad_h(&sys, p.x, y);
            let dot = hx * u + hy * v;
            let scale = (hx.abs() + hy.abs()) * (u.abs() + v.abs());
            prop_assert!(dot.abs() <= 1e-12 * scale.max(1e-300), "dot {} scale {}", dot, scale);
            prop_assert!((sys.hamiltonian(p.x, y).unwrap() - h).abs() <= 1e-9 * h.abs().max(1.0));
        }
    }

    #[test]
    fn ovals_sit_on_one_side_of_the_axis((sys, ann, h) in case(), t in 0.0f64..std::f64::consts::FRAC_PI_2) {
        let x = oval_endpoints(&sys, h).unwrap().point(&sys, t).x;
        if sys.kind == SystemKind::S1 && ann.branch == Branch::Negative {
            prop_assert!(x < 0.0);
        } else {
            prop_assert!(x > 0.0);
        }
    }

    #[test]
    fn dy_integral_interchanges_with_dx((sys, _ann, h) in case(), i in -1i32..4, j in 0u32..4) {
        // on the upper half-oval y vanishes at both ends, so
        // int x^p y^j dy = -p/(j+1) int x^(p-1) y^(j+1) dx with p = i - k - 1
        let p = i as f64 - sys.k_f64() - 1.0;
        let lhs = integral_dy(&sys, h, p, j).unwrap();
        let lowered = integral_i(&sys, h, IntegralIndex::new(i - 1, j + 1)).unwrap();
        let rhs = -p / (j as f64 + 1.0) * lowered;
        let scale = rhs.abs().max(1e-8 * lowered.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-7 * scale, "{} vs {}", lhs, rhs);
    }
}

#[test]
fn r19_endpoints_are_reciprocal() {
    let sys = make_system(SystemKind::R19);
    for h in [0.016, 0.02, 0.1, 1.0, 30.0] {
        let g = oval_endpoints(&sys, h).unwrap();
        assert!((g.x1 * g.x2 - 1.0).abs() <= 1e-10 * g.x2);
    }
}

#[test]
fn generating_integral_reference_value() {
    let sys = make_system(SystemKind::S1);
    let v = integral_i(&sys, 1.0, IntegralIndex::new(0, 0)).unwrap();
    assert!((v - 4.0 * 2f64.sqrt()).abs() < 1e-12);
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn recurrence_spot_checks() {
    let i = |sys: &SystemSpec, h: f64, twice_i: i32, j: u32| integral_i(sys, h, IntegralIndex::half(twice_i, j)).unwrap();
    let s1 = make_system(SystemKind::S1);
    for h in [0.2, 3.0, -1.7, -9.0] {
        let rhs = -(2.0 * h + 1.0) * i(&s1, h, 0, 1) + 2.0 * i(&s1, h, -2, 1);
        assert!(rel(i(&s1, h, 2, 1), rhs) < 1e-8, "S1 h={h}");
    }
    let s2 = make_system(SystemKind::S2);
    for h in [0.1, 0.5, 0.9] {
        assert!(rel(i(&s2, h, -2, 2), 4.0 / 3.0 * h * i(&s2, h, 2, 0)) < 1e-8, "S2 h={h}");
    }
    let r19 = make_system(SystemKind::R19);
    for h in [0.02, 0.3, 5.0] {
        assert!(rel(i(&r19, h, 1, 0), 64.0 * h * i(&r19, h, 2, 0)) < 1e-8, "r19 h={h}");
        assert!(rel(i(&r19, h, -1, 1), 64.0 * h * i(&r19, h, 0, 1)) < 1e-8, "r19 h={h}");
    }
}
