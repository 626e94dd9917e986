//! Monte Carlo coverage of the cross-fitted intervals.

use gates_core::sim::{generate, Dgp, DgpKind};
use gates_core::{cross_fit_gates, heterogeneity_contrast, CrossFitConfig, LassoTLearner};
use rayon::prelude::*;

const REPS: usize = 500;

#[test]
fn zero_effect_intervals_cover_zero() {
    let learner = LassoTLearner::default();
    let dgp = Dgp::null();
    let covered: Vec<Vec<bool>> = (0..REPS)
        .into_par_iter()
        .map(|r| {
            let data = generate(&dgp, 500, 9000 + r as u64).unwrap().dataset;
            let res = cross_fit_gates(&data, &CrossFitConfig::new(3, 5, 0.05, r as u64), &learner).unwrap();
            (0..5)
                .map(|g| res.ci_lower[g] <= 0.0 && 0.0 <= res.ci_upper[g])
                .collect()
        })
        .collect();
    for g in 0..5 {
        let rate = covered.iter().filter(|c| c[g]).count() as f64 / REPS as f64;
        assert!(rate >= 0.93, "group {}: coverage {rate}", g + 1);
    }
}

#[test]
fn homogeneous_effect_contrast_covers_zero() {
    let learner = LassoTLearner::default();
    let dgp = Dgp::new(DgpKind::Constant { effect: 1.0 });
    let covered = (0..REPS)
        .into_par_iter()
        .filter(|&r| {
            let data = generate(&dgp, 500, 7000 + r as u64).unwrap().dataset;
            let res = cross_fit_gates(&data, &CrossFitConfig::new(3, 5, 0.05, r as u64), &learner).unwrap();
            let c = heterogeneity_contrast(&res).unwrap();
            c.ci_lower <= 0.0 && 0.0 <= c.ci_upper
        })
        .count();
    let rate = covered as f64 / REPS as f64;
    assert!(rate >= 0.93, "contrast coverage {rate}");
}
