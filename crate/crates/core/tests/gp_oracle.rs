mod support;

use latent_bo_core::gp::expected_improvement;
use proptest::prelude::*;
use support::gp_suite;

#[test]
fn gp_matches_dense_oracle() {
    let r = gp_suite(5, 1_000_000);
    assert!(r.lml_rel < 1e-6, "lml {:e}", r.lml_rel);
    assert!(r.grad_rel < 1e-4, "grad {:e}", r.grad_rel);
    assert!(r.mean_rel < 1e-8, "mean {:e}", r.mean_rel);
    assert!(r.var_rel < 1e-8, "var {:e}", r.var_rel);
    assert!(r.ei_worst_se < 3.0, "EI off by {} SE", r.ei_worst_se);
    assert!(r.argmax_dist < 1e-2, "acquisition {} from grid argmax", r.argmax_dist);
}

proptest! {
    #[test]
    fn ei_is_non_negative_and_increasing_in_mean(mu in -3.0f64..3.0, s in 0.01f64..3.0, xi in -3.0f64..3.0) {
        let e = expected_improvement(mu, s, xi);
        prop_assert!(e >= 0.0);
        prop_assert!(e >= (mu - xi).max(0.0) - 1e-12);
        prop_assert!(expected_improvement(mu + 0.1, s, xi) >= e);
    }
}
