use proptest::prelude::*;
use roughflow::field::{RegularityTarget, SpectralField};
use roughflow::flow::{FlowParams, PhaseBox, PhaseState};
use roughflow::force::{HarmonicField, ZeroField};
use roughflow::stability::*;
use std::sync::OnceLock;

fn rough() -> &'static SpectralField {
    static FIELD: OnceLock<SpectralField> = OnceLock::new();
    FIELD.get_or_init(|| SpectralField::synthesize(&RegularityTarget::new(0.95, 64, 1.0), 1, 132.0, 2, false).unwrap())
}

fn small_ensemble(seed: u64, count: usize) -> EnsembleSpec {
    EnsembleSpec {
        count,
        ..EnsembleSpec::default_for(1, seed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn a_delta_is_nondecreasing(x in 0.0f64..1.0, v in 0.0f64..1.0, e in 1.0f64..6.0, theta in 0.0f64..6.28) {
        let delta = 10f64.powf(-e);
        let pair = PerturbedPair::new(
            PhaseState::new(vec![x], vec![v]),
            vec![delta * theta.cos()],
            vec![delta * theta.sin()],
            delta,
        ).unwrap();
        let rec = divergence_record(rough(), &pair, &FlowParams::new(1e-3, 1.0, 3).unwrap()).unwrap();
        prop_assert!(rec.a_delta[0] >= delta * delta);
        prop_assert!(rec.a_delta.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn q_is_nonnegative(seed in 0u64..500, e in 1.5f64..6.0) {
        let q = q_delta(rough(), &small_ensemble(seed, 16), &ShiftDirection::diagonal(1), 10f64.powf(-e), &FlowParams::new(1e-2, 1.0, 1).unwrap()).unwrap();
        prop_assert!(q >= 0.0);
    }

    #[test]
    fn free_flight_q_ignores_the_shift_size(seed in 0u64..500, t in 0.1f64..3.0, a in 0.0f64..1.0) {
        let shift = ShiftDirection::new(vec![a], vec![(1.0 - a * a).sqrt()]).unwrap();
        let params = FlowParams::new(0.01, t, 1).unwrap();
        let ens = small_ensemble(seed, 8);
        let qs = q_delta_many(&ZeroField { dim: 1 }, &ens, &shift, &[0.3, 1e-3, 1e-6], &params).unwrap();
        prop_assert!((qs[0] - qs[2]).abs() <= 1e-8 * qs[0].max(1e-300));
        let t = params.horizon();
        let bound = (1.0 + (1.0 + t) * (1.0 + t) + t).ln();
        prop_assert!(qs.iter().all(|&q| q <= bound * (1.0 + 1e-12)));
    }
}

#[test]
fn grid_refinement_changes_q_by_under_two_percent() {
    let smooth = SpectralField::synthesize(&RegularityTarget::new(2.5, 8, 1.0), 1, 132.0, 4, false).unwrap();
    let params = FlowParams::new(1e-2, 2.0, 1).unwrap();
    let shift = ShiftDirection::diagonal(1);
    let grid = |m: usize| EnsembleSpec {
        omega: PhaseBox::unit(1),
        sampling: Sampling::Grid,
        count: m * m,
        seed: 0,
    };
    let harmonic = HarmonicField::unit(1);
    for (name, coarse, fine) in [
        (
            "smooth",
            q_delta(&smooth, &grid(16), &shift, 1e-3, &params).unwrap(),
            q_delta(&smooth, &grid(32), &shift, 1e-3, &params).unwrap(),
        ),
        (
            "harmonic",
            q_delta(&harmonic, &grid(16), &shift, 1e-3, &params).unwrap(),
            q_delta(&harmonic, &grid(32), &shift, 1e-3, &params).unwrap(),
        ),
    ] {
        assert!((coarse - fine).abs() <= 0.02 * fine, "{name}: {coarse} vs {fine}");
    }
}

#[test]
fn q_over_log_stays_below_its_first_value() {
    let ens = small_ensemble(1, 128);
    let deltas: Vec<f64> = (3..=10).map(|p| 10f64.powf(-(p as f64) / 2.0)).collect();
    let table = q_scaling_study(rough(), &ens, &ShiftDirection::diagonal(1), &deltas, &FlowParams::new(1e-3, 2.0, 1).unwrap()).unwrap();
    let first = table.rows[0].q_over_log;
    assert!(table.rows.iter().all(|r| r.q_over_log <= 1.5 * first));
    let fit = fit_log_exponent(&table.rows).unwrap();
    assert!(fit.exponent <= 1.1);
}

#[test]
fn blow_up_names_the_member() {
    struct Repel;
    impl roughflow::force::ForceField for Repel {
        fn dim(&self) -> usize {
            1
        }
        fn force_into(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0].abs().powi(3) * 1e6;
        }
    }
    let ens = small_ensemble(0, 4);
    let err = q_delta(&Repel, &ens, &ShiftDirection::diagonal(1), 1e-3, &FlowParams::new(1e-2, 5.0, 1).unwrap()).unwrap_err();
    assert!(err.is_blow_up());
    assert!(matches!(err, roughflow::error::Error::EnsembleMember { .. }));
}
