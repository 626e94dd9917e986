//! Split-sample robust inference (SSRI) for GATES.
//!
//! Each of `S` random splits trains the proxy (and optionally a baseline
//! outcome model) on the auxiliary sample and estimates the sorted-group
//! effects with a conditional interval on the main sample. The reported
//! interval takes the median of the lower bounds and the median of the upper
//! bounds across splits; conditional intervals are built at level `1 − α/2`
//! by default so the aggregate targets `1 − α`.
//!
//! The per-split estimator is the same fold estimator used by the
//! cross-fitting procedure, so the two procedures differ only in how they
//! split and aggregate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_split_plan, ExperimentDataset, SplitKind, SplitPlan};
use crate::error::{Error, Result};
use crate::learners::{fit_baseline, ProxyLearner, ProxyScore};
use crate::ri::{estimate_gates_split, MAX_PLAN_ATTEMPTS};
use crate::seed::{derive_path, STREAM_PLAN, STREAM_SPLIT};
use crate::stats::{mean, median, normal_critical_value};
use crate::timing::timed;

/// Fresh sub-seeds tried for a split whose learner fails.
pub const MAX_LEARNER_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelAdjust {
    /// Conditional intervals at level `1 − α/2`.
    #[default]
    Halved,
    /// Conditional intervals at the nominal level `1 − α`.
    Nominal,
}

impl LevelAdjust {
    pub fn conditional_alpha(self, alpha: f64) -> f64 {
        match self {
            LevelAdjust::Halved => alpha / 2.0,
            LevelAdjust::Nominal => alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsriConfig {
    pub n_splits: usize,
    pub main_fraction: f64,
    pub k_groups: usize,
    pub alpha: f64,
    pub baseline: bool,
    pub level_adjust: LevelAdjust,
    pub baseline_cv_folds: usize,
    pub seed: u64,
}

impl SsriConfig {
    pub fn new(n_splits: usize, main_fraction: f64, k_groups: usize, alpha: f64, seed: u64) -> Self {
        Self {
            n_splits,
            main_fraction,
            k_groups,
            alpha,
            baseline: false,
            level_adjust: LevelAdjust::Halved,
            baseline_cv_folds: 5,
            seed,
        }
    }

    pub fn with_baseline(mut self, baseline: bool) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn with_level_adjust(mut self, level_adjust: LevelAdjust) -> Self {
        self.level_adjust = level_adjust;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_splits < 1 {
            return Err(Error::InvalidParameter("need at least one split".into()));
        }
        if self.k_groups < 2 {
            return Err(Error::InvalidParameter(format!("need K >= 2, got {}", self.k_groups)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsriSplitRecord {
    pub split_index: usize,
    pub gamma_hat: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub baseline_used: bool,
    pub plan_seed: u64,
    pub cpu_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsriResult {
    pub k_groups: usize,
    pub n_splits: usize,
    pub main_fraction: f64,
    pub alpha: f64,
    pub level_adjust: LevelAdjust,
    pub baseline: bool,
    pub point_median: Vec<f64>,
    pub point_mean: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub records: Vec<SsriSplitRecord>,
    /// Sum of per-split CPU seconds (independent of how splits were scheduled).
    pub total_cpu_seconds: f64,
    pub learner_id: String,
    pub seed: u64,
    pub estimator: String,
}

impl SsriResult {
    pub fn ci_length(&self) -> Vec<f64> {
        self.ci_lower.iter().zip(&self.ci_upper).map(|(l, u)| u - l).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianAggregate {
    pub point_median: Vec<f64>,
    pub point_mean: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
}

/// Elementwise medians of split estimates and of interval bounds.
pub fn median_aggregate(records: &[SsriSplitRecord]) -> Result<MedianAggregate> {
    let k = records
        .first()
        .map(|r| r.gamma_hat.len())
        .ok_or_else(|| Error::InvalidParameter("no split records to aggregate".into()))?;
    let column =
        |f: &dyn Fn(&SsriSplitRecord) -> &Vec<f64>, g: usize| -> Vec<f64> { records.iter().map(|r| f(r)[g]).collect() };
    let per_group = |f: &dyn Fn(&SsriSplitRecord) -> &Vec<f64>, agg: fn(&[f64]) -> f64| -> Vec<f64> {
        (0..k).map(|g| agg(&column(f, g))).collect()
    };
    Ok(MedianAggregate {
        point_median: per_group(&|r| &r.gamma_hat, median),
        point_mean: per_group(&|r| &r.gamma_hat, mean),
        ci_lower: per_group(&|r| &r.ci_lower, median),
        ci_upper: per_group(&|r| &r.ci_upper, median),
    })
}

/// Draws a main/auxiliary split whose main sample has both arms and at least
/// `k_groups` units, and whose auxiliary sample has two units per arm.
pub fn plan_main_aux(data: &ExperimentDataset, main_fraction: f64, k_groups: usize, seed: u64) -> Result<SplitPlan> {
    let d = data.d();
    for attempt in 0..MAX_PLAN_ATTEMPTS {
        let plan_seed = derive_path(seed, &[STREAM_PLAN, attempt as u64]);
        let plan = make_split_plan(data.n(), SplitKind::MainAux { main_fraction }, plan_seed)?;
        if plan.folds[0].len() < k_groups {
            return Err(Error::TooFewUnits {
                required: k_groups,
                got: plan.folds[0].len(),
            });
        }
        let arms = |fold: &[usize]| {
            let t = fold.iter().filter(|&&i| d[i]).count();
            (t, fold.len() - t)
        };
        let (mt, mc) = arms(&plan.folds[0]);
        let (at, ac) = arms(&plan.folds[1]);
        if mt >= 1 && mc >= 1 && at >= 2 && ac >= 2 {
            return Ok(plan);
        }
    }
    Err(Error::DegenerateFolds {
        attempts: MAX_PLAN_ATTEMPTS,
    })
}

struct SplitOutcome {
    record: SsriSplitRecord,
    proxy: Box<dyn ProxyScore>,
}

fn run_split(
    data: &ExperimentDataset,
    cfg: &SsriConfig,
    learner: &dyn ProxyLearner,
    s: usize,
    z_crit: f64,
) -> Result<SplitOutcome> {
    let mut last_err = None;
    for retry in 0..MAX_LEARNER_RETRIES {
        let split_seed = derive_path(cfg.seed, &[STREAM_SPLIT, s as u64, retry as u64]);
        let plan = plan_main_aux(data, cfg.main_fraction, cfg.k_groups, split_seed)?;
        let (main, aux) = (&plan.folds[0], &plan.folds[1]);
        let train = data.subset(aux)?;
        let proxy = match learner.fit(&train) {
            Ok(p) => p,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mut y: Vec<f64> = main.iter().map(|&i| data.y()[i]).collect();
        if cfg.baseline {
            match fit_baseline(&train, cfg.baseline_cv_folds) {
                Ok(b) => {
                    for (yi, &i) in y.iter_mut().zip(main) {
                        *yi -= b.predict(data.z_row(i));
                    }
                }
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            }
        }
        let d: Vec<bool> = main.iter().map(|&i| data.d()[i]).collect();
        let scores: Vec<f64> = main.iter().map(|&i| proxy.score(data.z_row(i))).collect();
        let est = estimate_gates_split(&y, &d, &scores, cfg.k_groups, s)?;
        let half: Vec<f64> = est.neyman_var.iter().map(|v| z_crit * v.sqrt()).collect();
        let record = SsriSplitRecord {
            split_index: s,
            ci_lower: est.gamma_hat.iter().zip(&half).map(|(g, h)| g - h).collect(),
            ci_upper: est.gamma_hat.iter().zip(&half).map(|(g, h)| g + h).collect(),
            gamma_hat: est.gamma_hat,
            baseline_used: cfg.baseline,
            plan_seed: plan.seed,
            cpu_seconds: 0.0,
        };
        return Ok(SplitOutcome { record, proxy });
    }
    Err(Error::Learner(format!(
        "split {s} failed after {MAX_LEARNER_RETRIES} attempts: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// SSRI result plus the per-split proxies, in split order.
pub struct SsriOutput {
    pub result: SsriResult,
    pub proxies: Vec<Box<dyn ProxyScore>>,
}

pub fn ssri_gates(data: &ExperimentDataset, cfg: &SsriConfig, learner: &dyn ProxyLearner) -> Result<SsriResult> {
    Ok(ssri_gates_detailed(data, cfg, learner)?.result)
}

pub fn ssri_gates_detailed(
    data: &ExperimentDataset,
    cfg: &SsriConfig,
    learner: &dyn ProxyLearner,
) -> Result<SsriOutput> {
    cfg.validate()?;
    let z_crit = normal_critical_value(cfg.level_adjust.conditional_alpha(cfg.alpha));
    let outcomes: Vec<SplitOutcome> = (0..cfg.n_splits)
        .into_par_iter()
        .map(|s| {
            let (out, secs) = timed(|| run_split(data, cfg, learner, s, z_crit));
            out.map(|mut o| {
                o.record.cpu_seconds = secs;
                o
            })
        })
        .collect::<Result<_>>()?;
    let (records, proxies): (Vec<_>, Vec<_>) = outcomes.into_iter().map(|o| (o.record, o.proxy)).unzip();
    let agg = median_aggregate(&records)?;
    let total_cpu_seconds = records.iter().map(|r| r.cpu_seconds).sum();
    Ok(SsriOutput {
        result: SsriResult {
            k_groups: cfg.k_groups,
            n_splits: cfg.n_splits,
            main_fraction: cfg.main_fraction,
            alpha: cfg.alpha,
            level_adjust: cfg.level_adjust,
            baseline: cfg.baseline,
            point_median: agg.point_median,
            point_mean: agg.point_mean,
            ci_lower: agg.ci_lower,
            ci_upper: agg.ci_upper,
            records,
            total_cpu_seconds,
            learner_id: learner.id(),
            seed: cfg.seed,
            estimator: "sorted-group contrast on main sample; conditional neyman interval; median of bounds".into(),
        },
        proxies,
    })
}
