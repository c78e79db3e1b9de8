mod common;

use proptest::prelude::*;

#[test]
fn finite_differences_match_continuous_model() {
    let err = common::linearization_error(50, 11);
    assert!(err < 1e-5, "{err:e}");
}

#[test]
fn zoh_matches_fine_rk4() {
    let err = common::discretization_error(20, 12);
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn rk4_oracle_matches_closed_form_oscillator() {
    use nalgebra::DMatrix;
    // ẋ = [[0, 1], [−1, 0]] x + [0, 1]ᵀ u
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let t: f64 = 0.7;
    let exact_a = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
    let exact_b = DMatrix::from_row_slice(2, 1, &[1.0 - t.cos(), t.sin()]);
    let err = |steps| {
        let (ad, bd) = common::rk4_discretize(&a, &b, t, steps);
        (ad - &exact_a).amax().max((bd - &exact_b).amax())
    };
    assert!(err(500) < 1e-13);
    let ratio = err(4) / err(8);
    assert!((ratio - 16.0).abs() < 2.0, "{ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linearization_holds_for_any_stance(seed in any::<u64>()) {
        prop_assert!(common::linearization_error(1, seed) < 1e-5);
    }

    #[test]
    fn discretization_holds_for_any_model(seed in any::<u64>()) {
        prop_assert!(common::discretization_error(1, seed) < 1e-8);
    }
}
