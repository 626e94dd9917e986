//! Synthetic experiments and the Monte Carlo comparison harness.
//!
//! All three effect shapes share the baseline `z₁ + 0.7 z₃ + 0.5 z₄²` over
//! standard normal covariates, unit noise on `Y(0)` and a fair coin for
//! treatment:
//!
//! | kind          | CATE                                 |
//! |---------------|--------------------------------------|
//! | `linear`      | `1 + z₁ − 0.5 z₂`                    |
//! | `polynomial`  | `0.5 z₁² + z₁ z₂ − 0.5`              |
//! | `step_change` | `2·1{z₁ > 0.5} − 1{z₂ < −0.5}`       |
//! | `constant`    | a fixed value (0 for the null model) |
//!
//! The estimand for a replicate is conditional on the proxies that
//! replicate trained: each proxy ranks a large fresh population into sorted
//! groups and the group means of the true CATE are averaged over the
//! method's proxies. Coverage is judged against that replicate-level truth.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ExperimentDataset;
use crate::error::{Error, Result};
use crate::grouping::assign_groups;
use crate::learners::{LambdaRule, LassoTLearner, ProxyLearner, ProxyScore};
use crate::ri::{cross_fit_gates_detailed, CrossFitConfig};
use crate::seed::{derive_path, rng_from_seed, STREAM_DATA, STREAM_METHOD, STREAM_POPULATION};
use crate::ssri::{ssri_gates_detailed, LevelAdjust, SsriConfig};
use crate::stats::mean;
use crate::timing::timed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpKind {
    Linear,
    Polynomial,
    StepChange,
    Constant { effect: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dgp {
    #[serde(flatten)]
    pub kind: DgpKind,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_treat_prob")]
    pub treat_prob: f64,
}

fn default_p() -> usize {
    10
}
fn default_noise_sd() -> f64 {
    1.0
}
fn default_treat_prob() -> f64 {
    0.5
}

impl Dgp {
    pub fn new(kind: DgpKind) -> Self {
        Self {
            kind,
            p: default_p(),
            noise_sd: default_noise_sd(),
            treat_prob: default_treat_prob(),
        }
    }

    pub fn null() -> Self {
        Self::new(DgpKind::Constant { effect: 0.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 4 {
            return Err(Error::InvalidParameter(format!(
                "DGP needs p >= 4 covariates, got {}",
                self.p
            )));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_sd must be positive, got {}",
                self.noise_sd
            )));
        }
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "treat_prob must lie in (0, 1), got {}",
                self.treat_prob
            )));
        }
        Ok(())
    }

    pub fn baseline(&self, z: ArrayView1<'_, f64>) -> f64 {
        z[0] + 0.7 * z[2] + 0.5 * z[3] * z[3]
    }

    pub fn cate(&self, z: ArrayView1<'_, f64>) -> f64 {
        match self.kind {
            DgpKind::Linear => 1.0 + z[0] - 0.5 * z[1],
            DgpKind::Polynomial => 0.5 * z[0] * z[0] + z[0] * z[1] - 0.5,
            DgpKind::StepChange => 2.0 * f64::from(u8::from(z[0] > 0.5)) - f64::from(u8::from(z[1] < -0.5)),
            DgpKind::Constant { effect } => effect,
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            DgpKind::Linear => "linear".into(),
            DgpKind::Polynomial => "polynomial".into(),
            DgpKind::StepChange => "step_change".into(),
            DgpKind::Constant { effect } => format!("constant({effect})"),
        }
    }

    fn draw_covariates(&self, rng: &mut impl Rng, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, self.p), |_| StandardNormal.sample(rng))
    }
}

/// A generated experiment with its potential outcomes.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: ExperimentDataset,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub cate: Vec<f64>,
}

/// Draws `n` units. Noise enters through `Y(0)` only, so `Y(1) − Y(0)` is
/// exactly the CATE. Treatment is redrawn in the rare event that one arm is
/// empty.
pub fn generate(dgp: &Dgp, n: usize, seed: u64) -> Result<SimulatedData> {
    dgp.validate()?;
    if n < 2 {
        return Err(Error::TooFewUnits { required: 2, got: n });
    }
    let mut rng = rng_from_seed(seed);
    let z = dgp.draw_covariates(&mut rng, n);
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            dgp.noise_sd * e
        })
        .collect();
    let d = loop {
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(dgp.treat_prob)).collect();
        if d.iter().any(|&t| t) && d.iter().any(|&t| !t) {
            break d;
        }
    };
    let cate: Vec<f64> = z.rows().into_iter().map(|r| dgp.cate(r)).collect();
    let y0: Vec<f64> = z
        .rows()
        .into_iter()
        .zip(&noise)
        .map(|(r, e)| dgp.baseline(r) + e)
        .collect();
    let y1: Vec<f64> = y0.iter().zip(&cate).map(|(a, c)| a + c).collect();
    let y = (0..n).map(|i| if d[i] { y1[i] } else { y0[i] }).collect();
    Ok(SimulatedData {
        dataset: ExperimentDataset::new(y, d, z)?,
        y0,
        y1,
        cate,
    })
}

/// A large draw of covariates with their true CATE values, used to evaluate
/// the sorted-group estimand of a trained proxy.
#[derive(Debug, Clone)]
pub struct Population {
    pub z: Array2<f64>,
    pub cate: Vec<f64>,
}

impl Population {
    pub fn draw(dgp: &Dgp, size: usize, seed: u64) -> Result<Self> {
        dgp.validate()?;
        let mut rng = rng_from_seed(seed);
        let z = dgp.draw_covariates(&mut rng, size);
        let cate = z.rows().into_iter().map(|r| dgp.cate(r)).collect();
        Ok(Self { z, cate })
    }

    pub fn new(z: Array2<f64>, cate: Vec<f64>) -> Result<Self> {
        if z.nrows() != cate.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} CATE values",
                z.nrows(),
                cate.len()
            )));
        }
        Ok(Self { z, cate })
    }

    pub fn size(&self) -> usize {
        self.cate.len()
    }
}

/// Mean true CATE within each sorted group that `proxy` induces on the
/// population (group 1 = highest scores).
pub fn true_gates(population: &Population, proxy: &dyn ProxyScore, k_groups: usize) -> Result<Vec<f64>> {
    let scores = proxy.score_rows(population.z.view());
    let groups = assign_groups(&scores, k_groups)?;
    let mut sums = vec![0.0; k_groups];
    let mut counts = vec![0usize; k_groups];
    for (&g, &c) in groups.group_of.iter().zip(&population.cate) {
        sums[g - 1] += c;
        counts[g - 1] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::TooFewUnits {
            required: k_groups,
            got: population.size(),
        });
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

/// Proxy learner that ignores the data and returns the true CATE function.
#[derive(Debug, Clone, Copy)]
pub struct OracleLearner {
    pub dgp: Dgp,
}

impl ProxyLearner for OracleLearner {
    fn id(&self) -> String {
        format!("oracle({})", self.dgp.name())
    }

    fn fit(&self, _train: &ExperimentDataset) -> Result<Box<dyn ProxyScore>> {
        let dgp = self.dgp;
        Ok(Box::new(move |z: ArrayView1<'_, f64>| dgp.cate(z)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum LearnerSpec {
    Lasso {
        #[serde(default)]
        lambda_rule: LambdaRule,
    },
    Oracle,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::Lasso {
            lambda_rule: LambdaRule::default(),
        }
    }
}

impl LearnerSpec {
    fn build(&self, dgp: &Dgp) -> Box<dyn ProxyLearner> {
        match *self {
            LearnerSpec::Lasso { lambda_rule } => Box::new(LassoTLearner { lambda_rule }),
            LearnerSpec::Oracle => Box::new(OracleLearner { dgp: *dgp }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    Ri {
        l: usize,
    },
    Ssri {
        splits: usize,
        main_fraction: f64,
        #[serde(default)]
        baseline: bool,
        #[serde(default)]
        level_adjust: LevelAdjust,
    },
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match *self {
            MethodSpec::Ri { l } => format!("RI(L={l})"),
            MethodSpec::Ssri {
                splits,
                main_fraction,
                baseline,
                level_adjust,
            } => {
                let b = if baseline { "baseline" } else { "no-baseline" };
                let lvl = match level_adjust {
                    LevelAdjust::Halved => "",
                    LevelAdjust::Nominal => ",nominal",
                };
                format!("SSRI(S={splits},main={main_fraction},{b}{lvl})")
            }
        }
    }

    fn min_units(&self, k: usize) -> usize {
        match *self {
            MethodSpec::Ri { l } => 2 * l.max(k),
            MethodSpec::Ssri { .. } => 2 * k,
        }
    }
}

fn default_sample_sizes() -> Vec<usize> {
    vec![100, 500, 2500]
}
fn default_k() -> usize {
    5
}
fn default_replicates() -> usize {
    200
}
fn default_truth_replicates() -> usize {
    1000
}
fn default_truth_population() -> usize {
    100_000
}
fn default_alpha() -> f64 {
    0.05
}

/// Monte Carlo study definition. Omitted keys take the desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub dgp: Dgp,
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_k")]
    pub k_groups: usize,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    /// Replicates averaged for the reported estimand; replicates beyond
    /// `n_replicates` only train proxies and evaluate their truth.
    #[serde(default = "default_truth_replicates")]
    pub truth_replicates: usize,
    #[serde(default = "default_truth_population")]
    pub truth_population: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub learner: LearnerSpec,
}

impl SimulationConfig {
    pub fn new(dgp: Dgp, methods: Vec<MethodSpec>) -> Self {
        Self {
            dgp,
            sample_sizes: default_sample_sizes(),
            k_groups: default_k(),
            methods,
            n_replicates: default_replicates(),
            truth_replicates: default_truth_replicates(),
            truth_population: default_truth_population(),
            alpha: default_alpha(),
            seed: 0,
            learner: LearnerSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_replicates < 1 {
            return bad("n_replicates must be >= 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.sample_sizes.is_empty() {
            return bad("at least one sample size is required".into());
        }
        if self.k_groups < 2 {
            return bad(format!("k_groups must be >= 2, got {}", self.k_groups));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.truth_population < self.k_groups {
            return bad(format!(
                "truth_population must be >= k_groups, got {}",
                self.truth_population
            ));
        }
        for m in &self.methods {
            match *m {
                MethodSpec::Ri { l } if l < 2 => return bad(format!("RI needs L >= 2, got {l}")),
                MethodSpec::Ssri {
                    splits, main_fraction, ..
                } if splits < 1 || !(main_fraction > 0.0 && main_fraction < 1.0) => {
                    return bad(format!("invalid SSRI spec: S={splits}, main_fraction={main_fraction}"))
                }
                _ => {}
            }
            for &n in &self.sample_sizes {
                if n < m.min_units(self.k_groups) {
                    return bad(format!(
                        "sample size {n} too small for {} with K={} (need >= {})",
                        m.label(),
                        self.k_groups,
                        m.min_units(self.k_groups)
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One (method, sample size, group) cell of the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub method: String,
    pub n: usize,
    pub group: usize,
    pub coverage: f64,
    pub avg_ci_length: f64,
    pub bias: f64,
    pub truth: f64,
    pub mean_estimate: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n: usize,
    pub replicates_ok: usize,
    pub failures: usize,
    pub truth_replicates_used: usize,
}

/// Deterministic summary of a study: identical configs give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub dgp_name: String,
    pub cells: Vec<ReportCell>,
    pub summaries: Vec<MethodSummary>,
}

impl SimulationReport {
    pub fn cell(&self, method: &str, n: usize, group: usize) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.n == n && c.group == group)
    }

    pub fn cells_for<'a>(&'a self, method: &'a str, n: usize) -> impl Iterator<Item = &'a ReportCell> + 'a {
        self.cells.iter().filter(move |c| c.method == method && c.n == n)
    }

    pub fn method_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.method) {
                out.push(c.method.clone());
            }
        }
        out
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.cells.iter().map(|c| c.n).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Flat table, one row per method × n × group.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for cell in &self.cells {
            w.serialize(cell)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// CPU cost per method; kept apart from [`SimulationReport`] because timings
/// vary run to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: String,
    pub n: usize,
    pub runs: usize,
    pub mean_cpu_seconds: f64,
    pub total_cpu_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub entries: Vec<MethodTiming>,
}

impl TimingReport {
    pub fn mean_cpu(&self, method: &str, n: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.method == method && e.n == n)
            .map(|e| e.mean_cpu_seconds)
    }
}

pub struct MonteCarloOutput {
    pub report: SimulationReport,
    pub timing: TimingReport,
}

/// What one method produced on one replicate.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub estimate: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub truth: Vec<f64>,
    pub cpu_seconds: f64,
}

impl MethodRun {
    pub fn covers(&self, group: usize) -> bool {
        self.ci_lower[group] <= self.truth[group] && self.truth[group] <= self.ci_upper[group]
    }
}

/// Runs one method on one dataset and evaluates its replicate-level truth on
/// `population`. SSRI reports the mean of its split estimates as the point
/// estimate.
pub fn run_method(
    data: &ExperimentDataset,
    method: &MethodSpec,
    k_groups: usize,
    alpha: f64,
    seed: u64,
    learner: &dyn ProxyLearner,
    population: &Population,
) -> Result<MethodRun> {
    let (estimate, ci_lower, ci_upper, proxies, cpu_seconds) = match *method {
        MethodSpec::Ri { l } => {
            let cfg = CrossFitConfig::new(l, k_groups, alpha, seed);
            let (out, secs) = timed(|| cross_fit_gates_detailed(data, &cfg, learner));
            let out = out?;
            let r = out.result;
            (r.gamma_hat, r.ci_lower, r.ci_upper, out.proxies, secs)
        }
        MethodSpec::Ssri {
            splits,
            main_fraction,
            baseline,
            level_adjust,
        } => {
            let cfg = SsriConfig::new(splits, main_fraction, k_groups, alpha, seed)
                .with_baseline(baseline)
                .with_level_adjust(level_adjust);
            let out = ssri_gates_detailed(data, &cfg, learner)?;
            let r = out.result;
            (r.point_mean, r.ci_lower, r.ci_upper, out.proxies, r.total_cpu_seconds)
        }
    };
    let mut truth = vec![0.0; k_groups];
    for proxy in &proxies {
        for (t, v) in truth.iter_mut().zip(true_gates(population, proxy.as_ref(), k_groups)?) {
            *t += v / proxies.len() as f64;
        }
    }
    Ok(MethodRun {
        estimate,
        ci_lower,
        ci_upper,
        truth,
        cpu_seconds,
    })
}

struct ReplicateResult {
    n_index: usize,
    coverage_replicate: bool,
    runs: Vec<std::result::Result<MethodRun, String>>,
}

fn run_replicate(cfg: &SimulationConfig, learner: &dyn ProxyLearner, n_index: usize, r: usize) -> ReplicateResult {
    let n = cfg.sample_sizes[n_index];
    let rep_seed = derive_path(cfg.seed, &[STREAM_DATA, n as u64, r as u64]);
    let prepared = generate(&cfg.dgp, n, rep_seed).and_then(|sim| {
        let pop_seed = derive_path(rep_seed, &[STREAM_POPULATION]);
        Ok((sim, Population::draw(&cfg.dgp, cfg.truth_population, pop_seed)?))
    });
    let runs = match prepared {
        Ok((sim, population)) => cfg
            .methods
            .iter()
            .enumerate()
            .map(|(mi, m)| {
                let seed = derive_path(rep_seed, &[STREAM_METHOD, mi as u64]);
                run_method(&sim.dataset, m, cfg.k_groups, cfg.alpha, seed, learner, &population)
                    .map_err(|e| e.to_string())
            })
            .collect(),
        Err(e) => vec![Err(e.to_string()); cfg.methods.len()],
    };
    ReplicateResult {
        n_index,
        coverage_replicate: r < cfg.n_replicates,
        runs,
    }
}

/// Runs the full study. Replicates run in parallel; every number in the
/// returned [`SimulationReport`] is a deterministic function of the config.
///
/// Failed method runs are excluded from that cell's averages and counted;
/// more than 5% failed runs overall aborts the study.
pub fn run_monte_carlo(cfg: &SimulationConfig) -> Result<MonteCarloOutput> {
    cfg.validate()?;
    let learner = cfg.learner.build(&cfg.dgp);
    let total_reps = cfg.n_replicates.max(cfg.truth_replicates);
    let jobs: Vec<(usize, usize)> = (0..cfg.sample_sizes.len())
        .flat_map(|ni| (0..total_reps).map(move |r| (ni, r)))
        .collect();
    let results: Vec<ReplicateResult> = jobs
        .into_par_iter()
        .map(|(ni, r)| run_replicate(cfg, learner.as_ref(), ni, r))
        .collect();

    let coverage_runs = results.iter().filter(|r| r.coverage_replicate).count() * cfg.methods.len();
    let mut failures = results
        .iter()
        .filter(|r| r.coverage_replicate)
        .flat_map(|r| r.runs.iter())
        .filter_map(|run| run.as_ref().err());
    let first_failure = failures.next().cloned();
    let failed = usize::from(first_failure.is_some()) + failures.count();
    if failed as f64 > 0.05 * coverage_runs as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: coverage_runs,
            first: first_failure.unwrap_or_default(),
        });
    }

    let k = cfg.k_groups;
    let mut cells = Vec::new();
    let mut summaries = Vec::new();
    let mut timing = Vec::new();
    for (ni, &n) in cfg.sample_sizes.iter().enumerate() {
        for (mi, method) in cfg.methods.iter().enumerate() {
            let label = method.label();
            let for_n = || results.iter().filter(move |r| r.n_index == ni);
            let ok: Vec<&MethodRun> = for_n()
                .filter(|r| r.coverage_replicate)
                .filter_map(|r| r.runs[mi].as_ref().ok())
                .collect();
            let failed_here = for_n()
                .filter(|r| r.coverage_replicate)
                .filter(|r| r.runs[mi].is_err())
                .count();
            let truth_runs: Vec<&MethodRun> = for_n().filter_map(|r| r.runs[mi].as_ref().ok()).collect();
            summaries.push(MethodSummary {
                method: label.clone(),
                n,
                replicates_ok: ok.len(),
                failures: failed_here,
                truth_replicates_used: truth_runs.len(),
            });
            let cpu: Vec<f64> = ok.iter().map(|r| r.cpu_seconds).collect();
            timing.push(MethodTiming {
                method: label.clone(),
                n,
                runs: cpu.len(),
                mean_cpu_seconds: if cpu.is_empty() { 0.0 } else { mean(&cpu) },
                total_cpu_seconds: cpu.iter().sum(),
            });
            for g in 0..k {
                let reps = ok.len().max(1) as f64;
                let covered = ok.iter().filter(|r| r.covers(g)).count() as f64;
                cells.push(ReportCell {
                    method: label.clone(),
                    n,
                    group: g + 1,
                    coverage: covered / reps,
                    avg_ci_length: ok.iter().map(|r| r.ci_upper[g] - r.ci_lower[g]).sum::<f64>() / reps,
                    bias: ok.iter().map(|r| r.estimate[g] - r.truth[g]).sum::<f64>() / reps,
                    truth: truth_runs.iter().map(|r| r.truth[g]).sum::<f64>() / truth_runs.len().max(1) as f64,
                    mean_estimate: ok.iter().map(|r| r.estimate[g]).sum::<f64>() / reps,
                    replicates: ok.len(),
                });
            }
        }
    }
    Ok(MonteCarloOutput {
        report: SimulationReport {
            config: cfg.clone(),
            dgp_name: cfg.dgp.name(),
            cells,
            summaries,
        },
        timing: TimingReport { entries: timing },
    })
}
