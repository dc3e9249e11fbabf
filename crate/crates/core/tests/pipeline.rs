use uniton_core::criteria::{bounded_powers_verdict, constant_potential_test, Verdict};
use uniton_core::fields::Chart;
use uniton_core::loops::{bp_product, uniton_factorize, verify_extended_solution};
use uniton_core::window::{from_loop, gauss_trace, Window};
use uniton_core::zoo::{self, ZOO};

#[test]
fn every_zoo_loop_is_an_extended_solution() {
    let chart = Chart::default();
    let pts = chart.random_points(3, 7);
    for name in ZOO {
        let ex = zoo::build(name, &chart).unwrap();
        if let Some(phi) = ex.extended() {
            let r = verify_extended_solution(phi, &pts, 32).unwrap();
            assert!(r.max() < 1e-8, "{name}: {r:?}");
        }
    }
}

#[test]
fn constant_potentials_agree_with_bounded_powers() {
    let chart = Chart::square(0.5, 17);
    for name in ["clifford3", "vacuum3"] {
        let ex = zoo::build(name, &chart).unwrap();
        let certified = constant_potential_test(ex.constant_potential().unwrap());
        assert!(matches!(certified, Verdict::NotFiniteCertified { .. }), "{name}: {certified:?}");
        let bp = bounded_powers_verdict(&ex.potential().unwrap(), 9, &chart).unwrap();
        assert!(!bp.verdict.is_finite(), "{name}: {:?}", bp.verdict);
    }
}

#[test]
fn veronese_factorization_rebuilds_the_loop() {
    let chart = Chart::default();
    let ex = zoo::build("veronese3", &chart).unwrap();
    let phi = ex.extended().unwrap();
    let f = uniton_factorize(phi, &chart, 5).unwrap();
    assert_eq!(f.unitons.len(), 2);
    let rebuilt = bp_product(&f.unitons, &f.v).unwrap();
    for z in chart.random_points(3, 3) {
        for k in 0..8 {
            let l = uniton_core::C64::from_polar(1.0, 0.7 * k as f64);
            assert!((rebuilt.value(l, z).unwrap() - phi.value(l, z).unwrap()).norm() < 1e-9);
        }
    }
    let w = from_loop(phi, Window::default_for(3)).unwrap();
    let tr = gauss_trace(&w, &chart.random_points(4, 0x5eed), 4).unwrap();
    assert_eq!(tr.stabilized_at, Some(2));
    assert!(tr.min_degree.iter().all(|d| *d == 0));
}
