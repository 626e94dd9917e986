//! Inference for sorted group average treatment effects (GATES) discovered by
//! machine-learning proxies in randomized experiments.
//!
//! Two interval constructions are provided:
//!
//! - [`ri`]: a single round of cross-fitting over `L` folds, per-fold GATES
//!   averaged across folds, with a Nadeau-Bengio corrected variance.
//! - [`ssri`]: many random main/auxiliary splits whose conditional intervals
//!   are aggregated by taking medians of the bounds.
//!
//! [`sim`] contains synthetic data-generating processes and a Monte Carlo
//! harness comparing the two on coverage, interval length and CPU cost.

pub mod data;
pub mod error;
pub mod grouping;
pub mod learners;
pub mod ri;
pub mod seed;
pub mod sim;
pub mod ssri;
pub mod stats;
pub mod timing;

pub use data::{load_csv, make_split_plan, ExperimentDataset, SplitKind, SplitPlan};
pub use error::{Error, Result};
pub use grouping::{assign_groups, compute_cutoffs, GroupAssignment, GroupCutoffs};
pub use learners::{LambdaRule, LassoTLearner, ProxyLearner, ProxyScore};
pub use ri::{
    clan, cross_fit_gates, estimate_gates_split, heterogeneity_contrast, variance_nadeau_bengio, ContrastResult,
    CrossFitConfig, GatesResult, SplitGatesEstimate,
};
pub use ssri::{median_aggregate, ssri_gates, LevelAdjust, SsriConfig, SsriResult};
