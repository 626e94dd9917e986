//! Cross-fitted randomization inference for GATES.
//!
//! The data are split once into `L` folds. Each fold in turn is the
//! evaluation sample: a proxy is trained on the other `L - 1` folds, the
//! evaluation units are ranked into `K` sorted groups, and the group effects
//! are estimated with the Horvitz-Thompson style contrast
//!
//! ```text
//! γ̂_k = K/N₁ Σ Y D f̂_k − K/N₀ Σ Y (1 − D) f̂_k
//! ```
//!
//! summed over the whole fold. The fold estimates are averaged, and the
//! variance of the average is the mean within-fold variance minus
//! `(L − 1)/L` times the across-fold sample variance, floored at the
//! independent-folds value `v̄ / L`.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::{make_split_plan, ExperimentDataset, SplitKind, SplitPlan};
use crate::error::{Error, Result};
use crate::grouping::{assign_groups, compute_cutoffs};
use crate::learners::{ProxyLearner, ProxyScore};
use crate::seed::{derive_path, STREAM_PLAN};
use crate::stats::{mean, normal_critical_value, sample_variance};

/// Maximum number of split plans drawn before giving up on folds that lack an arm.
pub const MAX_PLAN_ATTEMPTS: usize = 100;

pub const VARIANCE_METHOD: &str =
    "neyman plug-in per fold (approximation) + nadeau-bengio correction floored at mean/L";

/// GATES estimate on one evaluation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitGatesEstimate {
    pub split_index: usize,
    pub gamma_hat: Vec<f64>,
    /// Conditional (given the fold's grouping) variance of each `γ̂_k`.
    pub neyman_var: Vec<f64>,
    /// Conditional covariance matrix of `(γ̂_1, ..., γ̂_K)`; its diagonal is `neyman_var`.
    pub neyman_cov: Vec<Vec<f64>>,
    pub n_treated: usize,
    pub n_control: usize,
    /// `[treated, control]` counts per group.
    pub group_counts: Vec<[usize; 2]>,
    /// Interior cutoffs `ĉ_1 .. ĉ_{K-1}` of the fold's scores.
    pub cutoffs: Vec<f64>,
}

/// Evaluates the sorted-group estimator on one fold.
///
/// `y`, `treated` and `scores` are aligned per unit. The conditional
/// variance treats the grouping as fixed and applies the Neyman two-sample
/// variance to the transformed outcome `K · Y · f̂_k`. An arm with a single
/// unit borrows the fold-wide sample covariance.
pub fn estimate_gates_split(
    y: &[f64],
    treated: &[bool],
    scores: &[f64],
    k_groups: usize,
    split_index: usize,
) -> Result<SplitGatesEstimate> {
    let m = y.len();
    if treated.len() != m || scores.len() != m {
        return Err(Error::Dimension(format!(
            "fold has {m} outcomes, {} treatment flags and {} scores",
            treated.len(),
            scores.len()
        )));
    }
    let n_treated = treated.iter().filter(|&&t| t).count();
    let n_control = m - n_treated;
    if n_treated == 0 || n_control == 0 {
        return Err(Error::SingleArm {
            treated: n_treated,
            control: n_control,
        });
    }
    let groups = assign_groups(scores, k_groups)?;
    let cutoffs = compute_cutoffs(scores, k_groups)?.interior().to_vec();
    let kf = k_groups as f64;

    let mut sums = vec![[0.0_f64; 2]; k_groups];
    let mut group_counts = vec![[0usize; 2]; k_groups];
    for i in 0..m {
        let arm = usize::from(!treated[i]);
        let g = groups.group_of[i] - 1;
        sums[g][arm] += y[i];
        group_counts[g][arm] += 1;
    }
    let gamma_hat = sums
        .iter()
        .map(|s| kf * s[0] / n_treated as f64 - kf * s[1] / n_control as f64)
        .collect();

    // sample covariance of W_i = K * y_i * e_{g(i)} over the units selected by `keep`
    let covariance = |keep: &dyn Fn(usize) -> bool| -> Vec<Vec<f64>> {
        let idx: Vec<usize> = (0..m).filter(|&i| keep(i)).collect();
        let count = idx.len() as f64;
        let mut w_mean = vec![0.0; k_groups];
        for &i in &idx {
            w_mean[groups.group_of[i] - 1] += kf * y[i] / count;
        }
        let mut cov = vec![vec![0.0; k_groups]; k_groups];
        for &i in &idx {
            let gi = groups.group_of[i] - 1;
            for a in 0..k_groups {
                let wa = if a == gi { kf * y[i] } else { 0.0 } - w_mean[a];
                for b in a..k_groups {
                    let wb = if b == gi { kf * y[i] } else { 0.0 } - w_mean[b];
                    cov[a][b] += wa * wb;
                }
            }
        }
        for a in 0..k_groups {
            for b in a..k_groups {
                cov[a][b] /= count - 1.0;
                cov[b][a] = cov[a][b];
            }
        }
        cov
    };
    let pooled = || covariance(&|_| true);
    let arm_cov = |arm: bool, count: usize| {
        if count >= 2 {
            covariance(&|i| treated[i] == arm)
        } else {
            pooled()
        }
    };
    let cov1 = arm_cov(true, n_treated);
    let cov0 = arm_cov(false, n_control);
    let neyman_cov: Vec<Vec<f64>> = (0..k_groups)
        .map(|a| {
            (0..k_groups)
                .map(|b| cov1[a][b] / n_treated as f64 + cov0[a][b] / n_control as f64)
                .collect()
        })
        .collect();
    let neyman_var = (0..k_groups).map(|a| neyman_cov[a][a].max(0.0)).collect();

    Ok(SplitGatesEstimate {
        split_index,
        gamma_hat,
        neyman_var,
        neyman_cov,
        n_treated,
        n_control,
        group_counts,
        cutoffs,
    })
}

/// Variance of a cross-fitted average from its per-fold estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedVariance {
    pub estimate: f64,
    pub variance: f64,
    /// Sample variance of the per-fold estimates (divisor `L − 1`).
    pub across_split_var: f64,
    pub mean_conditional_var: f64,
    pub floor_active: bool,
}

/// `max(v̄ − (L−1)/L · V², v̄/L)` for one quantity estimated on `L` folds.
pub fn nadeau_bengio(estimates: &[f64], conditional_vars: &[f64]) -> Result<CorrectedVariance> {
    let l = estimates.len();
    if l < 2 || conditional_vars.len() != l {
        return Err(Error::InvalidParameter(format!(
            "need matching estimates and variances for L >= 2 folds, got {l} and {}",
            conditional_vars.len()
        )));
    }
    let lf = l as f64;
    let estimate = mean(estimates);
    let across = sample_variance(estimates);
    let vbar = mean(conditional_vars);
    let raw = vbar - (lf - 1.0) / lf * across;
    let floor = vbar / lf;
    Ok(CorrectedVariance {
        estimate,
        variance: raw.max(floor),
        across_split_var: across,
        mean_conditional_var: vbar,
        floor_active: raw < floor,
    })
}

/// Per-group corrected variances for a set of fold estimates.
pub fn variance_nadeau_bengio(per_split: &[SplitGatesEstimate]) -> Result<Vec<f64>> {
    Ok(per_group_correction(per_split)?
        .into_iter()
        .map(|c| c.variance)
        .collect())
}

fn per_group_correction(per_split: &[SplitGatesEstimate]) -> Result<Vec<CorrectedVariance>> {
    let k = per_split
        .first()
        .map(|s| s.gamma_hat.len())
        .ok_or_else(|| Error::InvalidParameter("no fold estimates".into()))?;
    (0..k)
        .map(|g| {
            let est: Vec<f64> = per_split.iter().map(|s| s.gamma_hat[g]).collect();
            let var: Vec<f64> = per_split.iter().map(|s| s.neyman_var[g]).collect();
            nadeau_bengio(&est, &var)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossFitConfig {
    pub l_splits: usize,
    pub k_groups: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl CrossFitConfig {
    pub fn new(l_splits: usize, k_groups: usize, alpha: f64, seed: u64) -> Self {
        Self {
            l_splits,
            k_groups,
            alpha,
            seed,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.l_splits < 2 {
            return Err(Error::InvalidSplit(format!("need L >= 2, got {}", self.l_splits)));
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
        if n / self.l_splits < self.k_groups {
            return Err(Error::TooFewUnits {
                required: self.l_splits * self.k_groups,
                got: n,
            });
        }
        Ok(())
    }
}

/// Cross-fitted GATES with intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatesResult {
    pub k_groups: usize,
    pub l_splits: usize,
    pub alpha: f64,
    pub gamma_hat: Vec<f64>,
    pub variance: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// `V²_k`, the sample variance of the per-fold estimates.
    pub across_split_var: Vec<f64>,
    /// `v̄_k`, the mean conditional variance across folds.
    pub mean_conditional_var: Vec<f64>,
    pub per_split: Vec<SplitGatesEstimate>,
    pub outcome: String,
    pub learner_id: String,
    pub seed: u64,
    /// Seed of the split plan actually used (after any re-draws).
    pub plan_seed: u64,
    pub group_orientation: String,
    pub variance_method: String,
}

impl GatesResult {
    fn assemble(
        per_split: Vec<SplitGatesEstimate>,
        cfg: &CrossFitConfig,
        plan_seed: u64,
        outcome: &str,
        learner_id: String,
    ) -> Result<Self> {
        let corr = per_group_correction(&per_split)?;
        let z = normal_critical_value(cfg.alpha);
        let gamma_hat: Vec<f64> = corr.iter().map(|c| c.estimate).collect();
        let variance: Vec<f64> = corr.iter().map(|c| c.variance).collect();
        Ok(Self {
            k_groups: cfg.k_groups,
            l_splits: cfg.l_splits,
            alpha: cfg.alpha,
            ci_lower: gamma_hat.iter().zip(&variance).map(|(g, v)| g - z * v.sqrt()).collect(),
            ci_upper: gamma_hat.iter().zip(&variance).map(|(g, v)| g + z * v.sqrt()).collect(),
            gamma_hat,
            variance,
            across_split_var: corr.iter().map(|c| c.across_split_var).collect(),
            mean_conditional_var: corr.iter().map(|c| c.mean_conditional_var).collect(),
            per_split,
            outcome: outcome.to_string(),
            learner_id,
            seed: cfg.seed,
            plan_seed,
            group_orientation: "group 1 = highest proxy scores".into(),
            variance_method: VARIANCE_METHOD.into(),
        })
    }

    pub fn ci_length(&self) -> Vec<f64> {
        self.ci_lower.iter().zip(&self.ci_upper).map(|(l, u)| u - l).collect()
    }
}

/// A cross-fit run together with the split plan and the per-fold proxies,
/// for callers that need to evaluate the estimand afterwards.
pub struct CrossFitOutput {
    pub result: GatesResult,
    pub plan: SplitPlan,
    pub proxies: Vec<Box<dyn ProxyScore>>,
}

/// Draws an `L`-fold plan in which every evaluation fold has both arms and
/// every training complement has at least two units per arm.
pub fn plan_cross_fit(data: &ExperimentDataset, l_splits: usize, seed: u64) -> Result<SplitPlan> {
    let d = data.d();
    for attempt in 0..MAX_PLAN_ATTEMPTS {
        let plan_seed = derive_path(seed, &[STREAM_PLAN, attempt as u64]);
        let plan = make_split_plan(data.n(), SplitKind::CrossFit { l: l_splits }, plan_seed)?;
        let total_t = data.n_treated();
        let total_c = data.n_control();
        let ok = plan.folds.iter().all(|fold| {
            let t = fold.iter().filter(|&&i| d[i]).count();
            let c = fold.len() - t;
            t >= 1 && c >= 1 && total_t - t >= 2 && total_c - c >= 2
        });
        if ok {
            return Ok(plan);
        }
    }
    Err(Error::DegenerateFolds {
        attempts: MAX_PLAN_ATTEMPTS,
    })
}

fn run_cross_fit(
    data: &ExperimentDataset,
    eval_outcome: &[f64],
    outcome_label: &str,
    cfg: &CrossFitConfig,
    learner: &dyn ProxyLearner,
) -> Result<CrossFitOutput> {
    cfg.validate(data.n())?;
    let plan = plan_cross_fit(data, cfg.l_splits, cfg.seed)?;
    let mut per_split = Vec::with_capacity(cfg.l_splits);
    let mut proxies = Vec::with_capacity(cfg.l_splits);
    for (l, fold) in plan.folds.iter().enumerate() {
        let train = data.subset(&plan.complement(l))?;
        let proxy = learner.fit(&train)?;
        let scores: Vec<f64> = fold.iter().map(|&i| proxy.score(data.z_row(i))).collect();
        let y: Vec<f64> = fold.iter().map(|&i| eval_outcome[i]).collect();
        let d: Vec<bool> = fold.iter().map(|&i| data.d()[i]).collect();
        per_split.push(estimate_gates_split(&y, &d, &scores, cfg.k_groups, l)?);
        proxies.push(proxy);
    }
    let result = GatesResult::assemble(per_split, cfg, plan.seed, outcome_label, learner.id())?;
    Ok(CrossFitOutput { result, plan, proxies })
}

/// Cross-fitted GATES of the observed outcome.
pub fn cross_fit_gates(
    data: &ExperimentDataset,
    cfg: &CrossFitConfig,
    learner: &dyn ProxyLearner,
) -> Result<GatesResult> {
    Ok(cross_fit_gates_detailed(data, cfg, learner)?.result)
}

pub fn cross_fit_gates_detailed(
    data: &ExperimentDataset,
    cfg: &CrossFitConfig,
    learner: &dyn ProxyLearner,
) -> Result<CrossFitOutput> {
    run_cross_fit(data, data.y(), "y", cfg, learner)
}

/// Classification analysis: the cross-fitted sorted-group contrast of
/// `g(Y, Z)` in place of `Y`.
///
/// Proxies are still trained on the observed outcome, so the sorted groups
/// are the same as in [`cross_fit_gates`] for the same seed; only the
/// quantity compared across arms changes.
pub fn clan<G>(data: &ExperimentDataset, g: G, cfg: &CrossFitConfig, learner: &dyn ProxyLearner) -> Result<GatesResult>
where
    G: Fn(f64, ArrayView1<'_, f64>) -> f64,
{
    let transformed: Vec<f64> = (0..data.n()).map(|i| g(data.y()[i], data.z_row(i))).collect();
    if let Some(row) = transformed.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "transformed outcome",
            row,
        });
    }
    Ok(run_cross_fit(data, &transformed, "g(y,z)", cfg, learner)?.result)
}

/// Difference between two sorted groups, aggregated across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    /// The contrast is `γ_first − γ_second`.
    pub first_group: usize,
    pub second_group: usize,
    pub estimate: f64,
    pub variance: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub per_split: Vec<f64>,
    pub per_split_var: Vec<f64>,
    pub across_split_var: f64,
}

/// `γ_first − γ_second` with per-fold conditional variance
/// `v_first + v_second − 2 c_{first,second}` and the same fold correction as
/// the group estimates.
pub fn group_contrast(result: &GatesResult, first: usize, second: usize) -> Result<ContrastResult> {
    let k = result.k_groups;
    if k < 2 || !(1..=k).contains(&first) || !(1..=k).contains(&second) || first == second {
        return Err(Error::InvalidParameter(format!(
            "contrast needs two distinct groups in 1..={k}, got {first} and {second}"
        )));
    }
    let (a, b) = (first - 1, second - 1);
    let per_split: Vec<f64> = result
        .per_split
        .iter()
        .map(|s| s.gamma_hat[a] - s.gamma_hat[b])
        .collect();
    let per_split_var: Vec<f64> = result
        .per_split
        .iter()
        .map(|s| (s.neyman_cov[a][a] + s.neyman_cov[b][b] - 2.0 * s.neyman_cov[a][b]).max(0.0))
        .collect();
    let corr = nadeau_bengio(&per_split, &per_split_var)?;
    let half = normal_critical_value(result.alpha) * corr.variance.sqrt();
    Ok(ContrastResult {
        first_group: first,
        second_group: second,
        estimate: corr.estimate,
        variance: corr.variance,
        ci_lower: corr.estimate - half,
        ci_upper: corr.estimate + half,
        alpha: result.alpha,
        per_split,
        per_split_var,
        across_split_var: corr.across_split_var,
    })
}

/// Least-minus-most contrast `γ_K − γ_1` (group 1 has the highest scores).
pub fn heterogeneity_contrast(result: &GatesResult) -> Result<ContrastResult> {
    group_contrast(result, result.k_groups, 1)
}
