mod common;

use common::identities::{self, Check};
use common::{state_in, windows};
use proptest::prelude::*;
use qgeo::finsler::ExtendedState;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 1000, ..ProptestConfig::default() }
}

prop_compose! {
    fn eckart_state()(w in 0usize..3, ft in 0.0..1.0f64, fx in 0.0..1.0f64, u in 0.2..3.0f64, r in -0.02..0.02f64)
        -> (usize, ExtendedState) {
        (w, state_in(&windows()[w], ft, fx, u, r))
    }
}

fn run(check: Check, w: usize, s: &ExtendedState) -> Result<(), TestCaseError> {
    match check(w, s) {
        Ok(true) => Ok(()),
        Ok(false) => Err(TestCaseError::reject("degenerate state")),
        Err(msg) => Err(TestCaseError::fail(msg)),
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn lambda_homogeneous_degree_one((w, s) in eckart_state()) { run(identities::lambda_homogeneous, w, &s)?; }

    #[test]
    fn euler_identity_first((w, s) in eckart_state()) { run(identities::euler_first, w, &s)?; }

    #[test]
    fn euler_identity_second((w, s) in eckart_state()) { run(identities::euler_second, w, &s)?; }

    #[test]
    fn metric_reconstructs_lambda_squared((w, s) in eckart_state()) { run(identities::metric_lambda_squared, w, &s)?; }

    #[test]
    fn momentum_identity((w, s) in eckart_state()) { run(identities::momentum, w, &s)?; }

    #[test]
    fn cartan_contraction_vanishes((w, s) in eckart_state()) { run(identities::cartan, w, &s)?; }

    #[test]
    fn metric_zero_homogeneous((w, s) in eckart_state()) { run(identities::metric_zero_homogeneous, w, &s)?; }

    #[test]
    fn closed_form_matches_velocity_hessian((w, s) in eckart_state()) { run(identities::closed_form_vs_hessian, w, &s)?; }

    #[test]
    fn determinant_law((w, s) in eckart_state()) { run(identities::determinant_law, w, &s)?; }

    #[test]
    fn metric_symmetric_and_inverse((w, s) in eckart_state()) { run(identities::symmetric_inverse, w, &s)?; }

    #[test]
    fn christoffel_contraction_and_symmetry((w, s) in eckart_state()) { run(identities::christoffel_contraction, w, &s)?; }
}
