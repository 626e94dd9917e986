//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (uncaptured) before asserting, so a full run doubles as a report.

use std::io::Write;
use std::process::Command;

use gates_core::grouping::{assign_groups, compute_cutoffs};
use gates_core::learners::lasso::{lambda_grid, lasso_fit, lasso_fit_model, LassoProblem};
use gates_core::ri::{estimate_gates_split, nadeau_bengio, SplitGatesEstimate};
use gates_core::seed::rng_from_seed;
use gates_core::sim::{generate, run_monte_carlo, Dgp, DgpKind, MethodSpec, SimulationConfig, SimulationReport};
use gates_core::ssri::LevelAdjust;
use gates_core::{cross_fit_gates, variance_nadeau_bengio, CrossFitConfig, LassoTLearner};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("[acceptance {id:>2}] {verdict} {name}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn ri(l: usize) -> MethodSpec {
    MethodSpec::Ri { l }
}

fn ssri(splits: usize, main_fraction: f64, baseline: bool) -> MethodSpec {
    MethodSpec::Ssri {
        splits,
        main_fraction,
        baseline,
        level_adjust: LevelAdjust::Halved,
    }
}

fn study(dgp: Dgp, methods: Vec<MethodSpec>, sizes: Vec<usize>, reps: usize, seed: u64) -> SimulationConfig {
    let mut cfg = SimulationConfig::new(dgp, methods);
    cfg.sample_sizes = sizes;
    cfg.k_groups = 5;
    cfg.n_replicates = reps;
    cfg.truth_replicates = 0;
    cfg.truth_population = 20_000;
    cfg.seed = seed;
    cfg
}

fn per_group(
    report: &SimulationReport,
    method: &MethodSpec,
    n: usize,
    f: impl Fn(&gates_core::sim::ReportCell) -> f64,
) -> Vec<f64> {
    (1..=5)
        .map(|g| f(report.cell(&method.label(), n, g).expect("cell")))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---------------------------------------------------------------- 1

/// Literal summation over the fold with rank-based group indicators.
fn literal_gates(y: &[f64], d: &[u8], s: &[f64], k: usize) -> Vec<f64> {
    let m = y.len();
    let mut order: Vec<usize> = (0..m).collect();
    // insertion sort: descending score, ascending index on ties
    for a in 1..m {
        let mut b = a;
        while b > 0 {
            let (i, j) = (order[b - 1], order[b]);
            if s[j] > s[i] || (s[j] == s[i] && j < i) {
                order.swap(b - 1, b);
                b -= 1;
            } else {
                break;
            }
        }
    }
    let mut f = vec![vec![0.0; m]; k];
    let mut start = 0;
    for g in 0..k {
        let size = m / k + usize::from(g < m % k);
        for &i in &order[start..start + size] {
            f[g][i] = 1.0;
        }
        start += size;
    }
    let n1 = d.iter().map(|&v| v as f64).sum::<f64>();
    let n0 = m as f64 - n1;
    let kf = k as f64;
    (0..k)
        .map(|g| {
            let mut acc = 0.0;
            for i in 0..m {
                let di = d[i] as f64;
                acc += kf / n1 * y[i] * di * f[g][i] - kf / n0 * y[i] * (1.0 - di) * f[g][i];
            }
            acc
        })
        .collect()
}

/// Outcomes, treatment flags, frozen scores, K.
type Fixture = (Vec<f64>, Vec<u8>, Vec<f64>, usize);

#[test]
fn criterion_01_split_estimator_matches_literal_sum() {
    let started = std::time::Instant::now();
    let fixtures: Vec<Fixture> = vec![
        (
            vec![2.0, -1.0, 0.5, 3.5, 1.25, -0.75, 4.0, 0.0, 2.5, 1.0, -2.0, 3.0],
            vec![1, 0, 0, 1, 1, 0, 1, 0, 1, 0, 1, 0],
            vec![0.3, -0.2, 1.4, 0.9, -1.0, 0.1, 2.2, -0.5, 0.7, 1.1, -0.3, 0.0],
            2,
        ),
        (
            vec![1.5, 0.2, -0.8, 2.4, 3.3, -1.1, 0.9, 1.7, 0.05, 2.2],
            vec![0, 1, 1, 1, 0, 1, 1, 0, 1, 1],
            vec![1.0, 1.0, 0.5, 2.0, 0.5, -1.0, 1.0, 3.0, 0.0, 2.0],
            3,
        ),
        (
            vec![5.0, 4.0, -3.0, 2.0, 1.0, 0.5, -0.5, 7.0],
            vec![1, 1, 0, 0, 1, 0, 1, 0],
            vec![-2.0, 4.0, 1.5, -0.5, 3.0, 0.25, 2.5, 6.0],
            4,
        ),
    ];
    let mut worst = 0.0f64;
    for (y, d, s, k) in &fixtures {
        let treated: Vec<bool> = d.iter().map(|&v| v == 1).collect();
        let est = estimate_gates_split(y, &treated, s, *k, 0).unwrap();
        for (a, b) in est.gamma_hat.iter().zip(literal_gates(y, d, s, *k)) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst <= 4.0 * f64::EPSILON && secs < 1.0;
    report(
        1,
        "split estimator equals literal summation",
        pass,
        &format!("3 fixtures, max relative gap {worst:.2e}, {secs:.3}s"),
    );
}

// ---------------------------------------------------------------- 2

fn fold(gamma: f64, var: f64) -> SplitGatesEstimate {
    SplitGatesEstimate {
        split_index: 0,
        gamma_hat: vec![gamma],
        neyman_var: vec![var],
        neyman_cov: vec![vec![var]],
        n_treated: 1,
        n_control: 1,
        group_counts: vec![[0, 0]],
        cutoffs: vec![],
    }
}

#[test]
fn criterion_02_aggregation_and_variance_arithmetic() {
    let started = std::time::Instant::now();
    let data = generate(&Dgp::new(DgpKind::Linear), 300, 4).unwrap().dataset;
    let r = cross_fit_gates(&data, &CrossFitConfig::new(3, 5, 0.05, 1), &LassoTLearner::default()).unwrap();
    let mean_exact = (0..5).all(|g| {
        let folds: Vec<f64> = r.per_split.iter().map(|s| s.gamma_hat[g]).collect();
        r.gamma_hat[g] == folds.iter().sum::<f64>() / folds.len() as f64
    });

    let identical = variance_nadeau_bengio(&[fold(0.3, 0.8), fold(0.3, 0.8), fold(0.3, 0.8), fold(0.3, 0.8)]).unwrap();
    // v̄ = 1, V² = 1, L = 4
    let at_floor = nadeau_bengio(&[0.0, 0.0, 0.0, 2.0], &[1.0; 4]).unwrap();
    // v̄ = 1, V² = 2, L = 4
    let floored = nadeau_bengio(&[0.0, 0.0, 1.0, 3.0], &[1.0; 4]).unwrap();
    let arithmetic = identical == vec![0.8]
        && at_floor.across_split_var == 1.0
        && at_floor.variance == 0.25
        && floored.across_split_var == 2.0
        && floored.variance == 0.25
        && floored.floor_active;
    let secs = started.elapsed().as_secs_f64();
    report(
        2,
        "fold mean and corrected variance arithmetic",
        mean_exact && arithmetic && secs < 1.0,
        &format!(
            "mean exact: {mean_exact}; examples -> {}, {}, {} (expected 0.8, 0.25, 0.25); {secs:.3}s",
            identical[0], at_floor.variance, floored.variance
        ),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_grouping_properties() {
    let started = std::time::Instant::now();
    let mut rng = rng_from_seed(303);
    let mut failures = Vec::new();
    let mut literal_checked = 0;
    for case in 0..1000 {
        let k = rng.random_range(2..=8);
        let m = if case % 2 == 0 {
            k * rng.random_range(1..=15)
        } else {
            rng.random_range(k..=120)
        };
        let tied = case % 5 == 0;
        let scores: Vec<f64> = (0..m)
            .map(|_| {
                let v: f64 = rng.random_range(-5.0..5.0);
                if tied {
                    v.round()
                } else {
                    v
                }
            })
            .collect();
        let g = assign_groups(&scores, k).unwrap();
        let sizes = g.sizes();
        if sizes.iter().sum::<usize>() != m || sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 1 {
            failures.push(format!("case {case}: sizes {sizes:?}"));
        }
        if g.group_of.iter().any(|&x| x < 1 || x > k) {
            failures.push(format!("case {case}: label out of range"));
        }
        let transformed: Vec<f64> = scores.iter().map(|s| s.powi(3) + s.exp()).collect();
        if assign_groups(&transformed, k).unwrap() != g {
            failures.push(format!("case {case}: transform changed groups"));
        }
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let distinct = sorted.windows(2).all(|w| w[0] < w[1]);
        if distinct && m % k == 0 {
            literal_checked += 1;
            let c = compute_cutoffs(&scores, k).unwrap();
            for (i, &s) in scores.iter().enumerate() {
                for kk in 1..=k {
                    let f = i32::from(s > c.cutoffs[kk]) - i32::from(s > c.cutoffs[kk - 1]);
                    if f != i32::from(g.group_of[i] == kk) {
                        failures.push(format!("case {case}: unit {i} group {kk} disagrees with cutoffs"));
                    }
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    report(
        3,
        "grouping partition, balance, invariance, cutoff agreement",
        failures.is_empty() && literal_checked >= 300 && secs < 10.0,
        &format!(
            "1000 instances, {literal_checked} cutoff comparisons, {} violations{}, {secs:.2}s",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    );
}

// ---------------------------------------------------------------- 4

fn tall_problem(rng: &mut impl Rng) -> (Array2<f64>, Vec<f64>) {
    let m = rng.random_range(30..250);
    let p = rng.random_range(1..15);
    let x = Array2::from_shape_fn((m, p), |(_, j)| {
        let e: f64 = StandardNormal.sample(rng);
        (j as f64 - 3.0) + (1.0 + j as f64) * e
    });
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y = (0..m)
        .map(|i| {
            let e: f64 = StandardNormal.sample(rng);
            -0.5 + (0..p).map(|j| x[[i, j]] * beta[j]).sum::<f64>() + 2.0 * e
        })
        .collect();
    (x, y)
}

fn normal_equations(x: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let (m, p) = x.dim();
    let a = DMatrix::from_fn(m, p + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
    let ata = a.transpose() * &a;
    let aty = a.transpose() * DVector::from_column_slice(y);
    ata.lu().solve(&aty).expect("full rank").iter().copied().collect()
}

/// Largest KKT violation on the standardized scale, from raw data.
fn kkt_violation(x: &Array2<f64>, y: &[f64], coef: &[f64], lambda: f64) -> f64 {
    let (m, p) = x.dim();
    let mf = m as f64;
    let r: Vec<f64> = (0..m)
        .map(|i| y[i] - coef[0] - (0..p).map(|j| x[[i, j]] * coef[j + 1]).sum::<f64>())
        .collect();
    let mut worst = 0.0f64;
    for j in 0..p {
        let col = x.column(j);
        let mu = col.sum() / mf;
        let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / mf).sqrt();
        let grad = col.iter().zip(&r).map(|(v, ri)| (v - mu) / sd * ri).sum::<f64>() / mf;
        let b = coef[j + 1];
        let gap = if b != 0.0 {
            (grad - lambda * b.signum()).abs()
        } else {
            (grad.abs() - lambda).max(0.0)
        };
        worst = worst.max(gap);
    }
    worst
}

#[test]
fn criterion_04_lasso_correctness() {
    let started = std::time::Instant::now();
    let mut rng = rng_from_seed(404);
    let (mut ols_gap, mut kkt_gap) = (0.0f64, 0.0f64);
    let mut nonzero_at_max = 0;
    for _ in 0..50 {
        let (x, y) = tall_problem(&mut rng);
        let fit = lasso_fit(x.view(), &y, 0.0).unwrap();
        for (a, b) in fit.iter().zip(normal_equations(&x, &y)) {
            ols_gap = ols_gap.max((a - b).abs());
        }
        let lmax = LassoProblem::new(x.view(), &y).unwrap().lambda_max();
        for lambda in lambda_grid(lmax) {
            let coef = lasso_fit(x.view(), &y, lambda).unwrap();
            kkt_gap = kkt_gap.max(kkt_violation(&x, &y, &coef, lambda));
        }
        for factor in [1.0, 2.0] {
            let at_max = lasso_fit_model(x.view(), &y, lmax * factor).unwrap();
            nonzero_at_max += at_max.slopes.iter().filter(|&&b| b != 0.0).count();
        }
    }
    let secs = started.elapsed().as_secs_f64();
    report(
        4,
        "lasso matches least squares, satisfies KKT, zero at lambda_max",
        ols_gap < 1e-6 && kkt_gap < 1e-5 && nonzero_at_max == 0 && secs < 30.0,
        &format!(
            "50 problems: max |lasso(0) - OLS| {ols_gap:.2e}, max KKT gap {kkt_gap:.2e} over 2500 fits, \
             {nonzero_at_max} nonzero slopes at lambda >= lambda_max, {secs:.2}s"
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_zero_effect_coverage() {
    let method = ri(5);
    let cfg = study(Dgp::null(), vec![method], vec![500], 300, 505);
    let out = run_monte_carlo(&cfg).unwrap();
    let coverage = per_group(&out.report, &method, 500, |c| c.coverage);
    report(
        5,
        "RI coverage under zero effect (n=500, K=5, L=5, 300 reps)",
        coverage.iter().all(|&c| c >= 0.90),
        &format!("coverage by group {} (threshold 0.90)", fmt(&coverage)),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_ssri_conservative() {
    let (s, r) = (ssri(50, 0.33, true), ri(3));
    let cfg = study(Dgp::new(DgpKind::Linear), vec![r, s], vec![500], 200, 606);
    let out = run_monte_carlo(&cfg).unwrap();
    let cov_s = per_group(&out.report, &s, 500, |c| c.coverage);
    let cov_r = per_group(&out.report, &r, 500, |c| c.coverage);
    let at_least_ri = (0..5).filter(|&g| cov_s[g] >= cov_r[g]).count();
    report(
        6,
        "SSRI near-complete coverage (linear, n=500, S=50, 200 reps)",
        cov_s.iter().all(|&c| c >= 0.97) && at_least_ri >= 4,
        &format!(
            "SSRI {} vs RI(L=3) {}; SSRI >= RI in {at_least_ri}/5 groups",
            fmt(&cov_s),
            fmt(&cov_r)
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_ri_shorter_than_ssri_without_baseline() {
    let (r, s) = (ri(3), ssri(50, 0.33, false));
    let mut shorter = 0;
    let mut details = Vec::new();
    for (i, kind) in [DgpKind::Linear, DgpKind::StepChange].into_iter().enumerate() {
        let cfg = study(Dgp::new(kind), vec![r, s], vec![500, 2500], 100, 707 + i as u64);
        let out = run_monte_carlo(&cfg).unwrap();
        for n in [500, 2500] {
            let len_r = per_group(&out.report, &r, n, |c| c.avg_ci_length);
            let len_s = per_group(&out.report, &s, n, |c| c.avg_ci_length);
            let wins = (0..5).filter(|&g| len_r[g] <= len_s[g]).count();
            if n == 2500 {
                shorter += wins;
            }
            details.push(format!(
                "{} n={n}: RI {} vs SSRI {} ({wins}/5)",
                Dgp::new(kind).name(),
                fmt(&len_r),
                fmt(&len_s)
            ));
        }
    }
    report(
        7,
        "RI intervals no longer than SSRI without baseline (n=2500)",
        shorter >= 9,
        &format!("{shorter}/10 cells at n=2500; {}", details.join("; ")),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_compute_ratio() {
    let (r, s) = (ri(3), ssri(250, 0.33, true));
    let mut cfg = study(Dgp::new(DgpKind::Linear), vec![r, s], vec![500], 10, 808);
    cfg.truth_population = 2000;
    let out = run_monte_carlo(&cfg).unwrap();
    let cpu_r = out.timing.mean_cpu(&r.label(), 500).unwrap();
    let cpu_s = out.timing.mean_cpu(&s.label(), 500).unwrap();
    let ratio = cpu_s / cpu_r;
    report(
        8,
        "CPU cost SSRI(S=250) / RI(L=3) at n=500",
        ratio >= 10.0,
        &format!("measured ratio {ratio:.1} (SSRI {cpu_s:.4}s, RI {cpu_r:.4}s per run, 10 runs each)"),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_split_proportions() {
    let (s33, s20) = (ssri(50, 0.33, true), ssri(50, 0.2, true));
    let (r3, r5) = (ri(3), ri(5));
    let cfg = study(Dgp::new(DgpKind::Linear), vec![s33, s20, r3, r5], vec![500], 100, 909);
    let out = run_monte_carlo(&cfg).unwrap();
    let avg = |m: &MethodSpec| mean(&per_group(&out.report, m, 500, |c| c.avg_ci_length));
    let (l33, l20, l3, l5) = (avg(&s33), avg(&s20), avg(&r3), avg(&r5));
    let rel = (l5 - l3).abs() / l3;
    report(
        9,
        "80/20 widens SSRI but barely moves RI (linear, n=500)",
        l20 > l33 && rel < 0.25,
        &format!(
            "SSRI mean length {l33:.3} (0.33) -> {l20:.3} (0.20); RI {l3:.3} (L=3) vs {l5:.3} (L=5), rel. diff {:.1}%",
            100.0 * rel
        ),
    );
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.toml");
    std::fs::write(
        &config,
        r#"
seed = 2024
sample_sizes = [100, 200]
k_groups = 5
n_replicates = 8
truth_replicates = 10
truth_population = 5000

[dgp]
kind = "polynomial"

[[methods]]
method = "ri"
l = 3

[[methods]]
method = "ssri"
splits = 5
main_fraction = 0.33
baseline = true
"#,
    )
    .unwrap();
    let run = |out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_gates"))
            .arg("simulate")
            .arg(&config)
            .arg("--out-dir")
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(dir.path().join(out).join("report.json")).unwrap()
    };
    let (a, b) = (run("first"), run("second"));
    let parsed: SimulationReport = serde_json::from_slice(&a).unwrap();
    report(
        10,
        "two simulate runs give byte-identical report.json",
        a == b && !a.is_empty(),
        &format!(
            "{} bytes each, {} cells, identical: {}",
            a.len(),
            parsed.cells.len(),
            a == b
        ),
    );
}
