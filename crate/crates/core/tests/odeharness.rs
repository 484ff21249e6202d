//! Direct simulation against the first-order Melnikov prediction.

use pfab::melnikov::{realize_max, MelnikovFunction};
use pfab::odeharness::{find_limit_cycles, half_return_with, section_point, start_on_left, section_range, OdeOptions};
use pfab::quadrature::oval_endpoints;
use pfab::systems::{make_system, Part, Perturbation, Side, SystemKind, SystemSpec};
use pfab::zeros::count_zeros;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS_LADDER: [f64; 3] = [1e-3, 1e-4, 1e-5];

/// Largest `|h* - z|` over the ladder; `INFINITY` where the counts differ.
fn cycle_errors(sys: &SystemSpec, pert: &Perturbation, zeros: &[f64], h_range: (f64, f64), samples: usize) -> Vec<f64> {
    let range = section_range(sys, h_range.0, h_range.1).unwrap();
    EPS_LADDER
        .iter()
        .map(|&eps| {
            let scan = find_limit_cycles(sys, pert, eps, range, samples).unwrap();
            assert!(!scan.degenerate);
            if scan.cycles.len() != zeros.len() {
                return f64::INFINITY;
            }
            scan.cycles.iter().zip(zeros).map(|(c, z)| (c.h - z).abs()).fold(0.0, f64::max)
        })
        .collect()
}

/// Counts agree along the ladder and the error shrinks at least like `eps`
/// up to a modest constant.
fn assert_converges(label: &str, errs: &[f64]) {
    assert!(errs.iter().all(|e| e.is_finite()), "{label}: cycle count mismatch {errs:?}");
    assert!(errs.windows(2).all(|w| w[1] < 0.2 * w[0]), "{label}: not first order {errs:?}");
}

fn realized(kind: SystemKind, targets: &[f64], h_range: (f64, f64)) {
    let sys = make_system(kind);
    let r = realize_max(&sys, targets).unwrap();
    let zeros: Vec<f64> = r.zeros.zeros.iter().map(|z| z.h).collect();
    assert_eq!(zeros.len(), targets.len());
    let errs = cycle_errors(&sys, &r.perturbation, &zeros, h_range, 300);
    assert_converges(&format!("{kind} {targets:?}"), &errs);
}

#[test]
fn s1_main_cycles_follow_zeros() {
    realized(SystemKind::S1, &[0.01, 0.08, 0.3, 1.2, 4.0], (0.005, 6.0));
}

#[test]
fn s1_negative_cycles_follow_zeros() {
    realized(SystemKind::S1, &[-5.0, -2.0, -1.3, -1.1, -1.02], (-7.5, -1.005));
}

#[test]
fn s2_cycles_follow_zeros() {
    realized(SystemKind::S2, &[0.1, 0.25, 0.4, 0.55, 0.7, 0.85], (0.05, 0.925));
}

#[test]
fn s2_cycles_follow_other_zeros() {
    realized(SystemKind::S2, &[0.08, 0.2, 0.35, 0.5, 0.65, 0.8], (0.04, 0.9));
}

/// A random quadratic perturbation keeping only the `x` and `xy` terms,
/// which keeps the switched field transversal to the section.
fn transversal_pert(seed: u64) -> Perturbation {
    let mut pert = Perturbation::random(2, false, &mut ChaCha8Rng::seed_from_u64(seed));
    for part in [Part::APlus, Part::AMinus, Part::BPlus, Part::BMinus] {
        for (i, j) in [(0, 0), (0, 1), (0, 2), (2, 0)] {
            pert.set(part, i, j, 0.0).unwrap();
        }
    }
    pert
}

fn random_config(kind: SystemKind, seed: u64) {
    let sys = make_system(kind);
    let pert = transversal_pert(seed);
    let h_range = (0.016, 0.15);
    let m = MelnikovFunction::new(&sys, &pert).unwrap();
    let zeros: Vec<f64> = count_zeros(|h| m.evaluate(h), h_range, 1024).unwrap().zeros.iter().map(|z| z.h).collect();
    assert!(!zeros.is_empty(), "{kind} seed {seed} has no zero");
    let errs = cycle_errors(&sys, &pert, &zeros, h_range, 200);
    assert_converges(&format!("{kind} seed {seed}"), &errs);
}

#[test]
fn r19_cycles_follow_zeros() {
    random_config(SystemKind::R19, 1);
    random_config(SystemKind::R19, 8);
}

#[test]
fn r20_cycles_follow_zeros() {
    random_config(SystemKind::R20, 9);
    random_config(SystemKind::R20, 60);
}

#[test]
fn crossings_are_located_accurately() {
    let opts = OdeOptions::default();
    for kind in SystemKind::ALL {
        let sys = make_system(kind);
        let pert = transversal_pert(3);
        for ann in &sys.sigma {
            let h = match (ann.lo.is_finite(), ann.hi.is_finite()) {
                (true, true) => 0.5 * (ann.lo + ann.hi),
                (true, false) => ann.lo + 0.5 * ann.lo.abs().max(0.1),
                _ => ann.hi - 1.0,
            };
            let geo = oval_endpoints(&sys, h).unwrap();
            let (start, turn) = if start_on_left(&sys, ann.branch) { (geo.x1, geo.x2) } else { (geo.x2, geo.x1) };
            for (x0, side) in [(start, Side::Upper), (turn, Side::Lower)] {
                let c = half_return_with(&sys, &pert, 1e-4, x0, side, &opts).unwrap();
                assert!(c.y.abs() <= 1e-12, "{kind} {side:?}: y = {}", c.y);
                assert!(c.dydt.abs() > 1e-12);
                assert!((c.x - x0).abs() > 0.1 * geo.width());
            }
        }
    }
}

#[test]
fn zero_eps_scan_is_degenerate() {
    let sys = make_system(SystemKind::S2);
    let pert = transversal_pert(5);
    let range = section_range(&sys, 0.2, 0.8).unwrap();
    let scan = find_limit_cycles(&sys, &pert, 0.0, range, 16).unwrap();
    assert!(scan.degenerate);
    assert!(scan.cycles.is_empty());
    assert_eq!(scan.samples.len(), 16);
}

#[test]
fn range_straddling_the_center_is_rejected() {
    let sys = make_system(SystemKind::S2);
    let a = section_point(&sys, 0.5).unwrap();
    let geo = oval_endpoints(&sys, 0.5).unwrap();
    let b = if (a - geo.x1).abs() < (a - geo.x2).abs() { geo.x2 } else { geo.x1 };
    assert!(find_limit_cycles(&sys, &Perturbation::zero(1), 1e-4, (a.min(b), a.max(b)), 8).is_err());
}

#[test]
fn smooth_s1_with_one_zero_has_one_cycle() {
    let sys = make_system(SystemKind::S1);
    let h_range = (0.05, 8.0);
    let (pert, zero) = [-4.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 4.0]
        .into_iter()
        .find_map(|c| {
            let mut p = Perturbation::zero(2);
            for part in [Part::APlus, Part::AMinus] {
                p.set(part, 0, 0, 1.0).unwrap();
            }
            for part in [Part::BPlus, Part::BMinus] {
                p.set(part, 0, 1, c).unwrap();
            }
            let m = MelnikovFunction::new(&sys, &p).unwrap();
            let rep = count_zeros(|h| m.evaluate(h), h_range, 1024).unwrap();
            (rep.count == 1).then(|| (p, rep.zeros[0].h))
        })
        .expect("a smooth perturbation with one zero");
    let range = section_range(&sys, h_range.0, h_range.1).unwrap();
    let scan = find_limit_cycles(&sys, &pert, 1e-4, range, 200).unwrap();
    assert_eq!(scan.cycles.len(), 1);
    assert!((scan.cycles[0].h - zero).abs() <= 1e-2 * zero.max(1.0), "{} vs {zero}", scan.cycles[0].h);
}
