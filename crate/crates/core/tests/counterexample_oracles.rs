use proptest::prelude::*;
use roughflow::counterexample::*;
use std::f64::consts::{PI, TAU};

fn sine(amplitude: f64) -> Oscillation {
    Oscillation::new(Shape::Sine, amplitude).unwrap()
}

/// For `h = a sin`, `A(η) = a (√π/2)(sin η + cos η − 1)`, from the Fresnel
/// integrals `∫_0^∞ (1 − cos(u²/2))/u² du = ∫_0^∞ sin(u²/2)/u² du = √π/2`.
fn closed_form(a: f64, eta: f64) -> f64 {
    a * 0.5 * PI.sqrt() * (eta.sin() + eta.cos() - 1.0)
}

fn pinned_scan(amplitude: f64, anchor: f64) -> Vec<ScanRow> {
    separation_scan(&ScanSpec {
        h: sine(amplitude),
        alpha: 0.25,
        n_list: (6..=13).map(|p| 1u64 << p).collect(),
        speed: SpeedSelection::Pinned {
            anchor,
            lo: anchor - 0.5,
            hi: anchor + 0.5,
        },
        quad_tol: 1e-10,
        z_max: Z_MAX,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn a_eta_matches_closed_form(eta in -10.0f64..10.0, a in 0.1f64..3.0) {
        let r = a_eta(&sine(a), eta, Z_MAX, 1e-4).unwrap();
        prop_assert!((r.value - closed_form(a, eta)).abs() <= r.tail_bound + 1e-8);
    }

    #[test]
    fn inverse_phi_residual(n in 1u64..20_000, target in -20.0f64..20.0) {
        let pot = OscillatoryPotential::new(n.max(8), 0.25, Oscillation::new(Shape::SineTwo, 1.0).unwrap()).unwrap();
        let x = pot.inverse_phi(target).unwrap();
        prop_assert!((pot.phi(x) - target).abs() <= 1e-12);
    }

    #[test]
    fn turning_point_relation(n in 16u64..4096, v in 0.5f64..4.0) {
        let pot = OscillatoryPotential::new(n, 0.25, sine(1.0)).unwrap();
        let delta = 1.0 / n as f64;
        let s = shifted_turning(&pot, v, delta, 1e-10).unwrap();
        let c = delta * delta + 2.0 * v * delta;
        prop_assert!((2.0 * pot.phi(s.turning_point) - c).abs() <= 1e-12);
        prop_assert!(s.t0 > 0.0);
    }
}

#[test]
fn a_eta_is_periodic_on_a_grid() {
    for shape in [Shape::Sine, Shape::SineTwo, Shape::SmoothTriangle] {
        let h = Oscillation::new(shape, 1.0).unwrap();
        for j in 0..32 {
            let eta = TAU * j as f64 / 32.0;
            let a = a_eta(&h, eta, Z_MAX, 1e-4).unwrap().value;
            let b = a_eta(&h, eta + TAU, Z_MAX, 1e-4).unwrap().value;
            assert!((a - b).abs() <= 1e-8, "{shape:?} {eta}");
        }
        assert_eq!(a_eta(&h, 0.0, Z_MAX, 1e-4).unwrap().value, 0.0);
    }
}

#[test]
fn every_built_in_shape_has_a_window() {
    for shape in [Shape::Sine, Shape::SineTwo, Shape::SmoothTriangle] {
        let w = certify_window(&Oscillation::new(shape, 1.0).unwrap(), WINDOW_THRESHOLD, WINDOW_GRID, 2e3).unwrap();
        assert!(w.eta_hi > w.eta_lo, "{shape:?}");
    }
}

#[test]
fn slopes_approach_the_ballistic_limit_as_amplitude_shrinks() {
    let anchor = 1.25 * PI;
    let slopes: Vec<f64> = [1.0, 0.3, 0.1]
        .iter()
        .map(|&a| fit_separation_exponent(&pinned_scan(a, anchor)).unwrap().slope)
        .collect();
    assert!(slopes[0] > slopes[1] && slopes[1] > slopes[2] && slopes[2] > -1.0, "{slopes:?}");
    assert!((slopes[0] + 0.75).abs() <= 0.1);
}

#[test]
fn quadrature_budget_holds_on_the_sine_scan() {
    let rows = pinned_scan(1.0, 1.25 * PI);
    assert!(quadrature_budget_ok(&rows));
    for r in &rows {
        assert!((r.eta - 1.25 * PI).abs() < 1e-9);
    }
}

#[test]
fn event_detection_converges_at_second_order() {
    for n in [64u64, 1024] {
        let pot = OscillatoryPotential::new(n, 0.25, sine(1.0)).unwrap();
        let v = pinned_speed(&pot, 1.25 * PI);
        let quad = turning_time(&pot, v, 1e-12).unwrap();
        let x = initial_position(&pot, v).unwrap();
        let coarse = (event_turning_time(&pot, x, v, 2e-5).unwrap().t0 - quad.t0).abs();
        let fine = (event_turning_time(&pot, x, v, 1e-5).unwrap().t0 - quad.t0).abs();
        let ratio = coarse / fine;
        assert!((3.5..=4.5).contains(&ratio), "N = {n}: {coarse:e} / {fine:e}");
    }
}

#[test]
fn energy_is_conserved_to_the_turning_point() {
    let pot = OscillatoryPotential::new(256, 0.25, sine(1.0)).unwrap();
    let v = pinned_speed(&pot, 1.25 * PI);
    let x = initial_position(&pot, v).unwrap();
    let ev = event_turning_time(&pot, x, v, 1e-6).unwrap();
    assert!(ev.energy_drift <= 1e-8, "{:e}", ev.energy_drift);
}
