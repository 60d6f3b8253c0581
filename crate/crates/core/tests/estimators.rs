//! Both stochastic gradient estimators against exact enumeration: the mean of
//! 10^4 draws must sit within three standard errors of the exact gradient.

mod support;

use support::checks::estimator_report;

#[test]
fn estimators_are_unbiased() {
    for (name, result) in estimator_report() {
        if let Err(e) = result {
            panic!("{name}: {e}");
        }
    }
}
