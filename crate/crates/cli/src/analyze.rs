use std::fmt::Write as _;
use std::path::Path;

use gates_core::ri::ContrastResult;
use gates_core::{
    cross_fit_gates, heterogeneity_contrast, load_csv, ssri_gates, CrossFitConfig, GatesResult, LambdaRule,
    LassoTLearner, LevelAdjust, SsriConfig, SsriResult,
};
use serde::Serialize;

use crate::manifest::{ensure_dir, write_file, write_json, ManifestBuilder};
use crate::{AnalyzeArgs, CliError, CliResult, LevelArg, Method};

/// Effective settings, hashed into the manifest.
#[derive(Debug, Serialize)]
struct AnalyzeSettings<'a> {
    method: &'a str,
    k_groups: usize,
    l_splits: Option<usize>,
    n_splits: Option<usize>,
    main_fraction: Option<f64>,
    alpha: f64,
    baseline: Option<bool>,
    level_adjust: Option<LevelAdjust>,
    cv_folds: usize,
    outcome: &'a str,
    treatment: &'a str,
    seed: u64,
}

#[derive(Debug, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
enum AnalyzeOutput {
    Ri {
        n: usize,
        gates: GatesResult,
        contrast: ContrastResult,
    },
    Ssri {
        n: usize,
        gates: SsriResult,
    },
}

fn level(arg: LevelArg) -> LevelAdjust {
    match arg {
        LevelArg::Halved => LevelAdjust::Halved,
        LevelArg::Nominal => LevelAdjust::Nominal,
    }
}

fn settings(args: &AnalyzeArgs) -> AnalyzeSettings<'_> {
    let ssri = matches!(args.method, Method::Ssri);
    AnalyzeSettings {
        method: if ssri { "ssri" } else { "ri" },
        k_groups: args.k,
        l_splits: (!ssri).then_some(args.l),
        n_splits: ssri.then_some(args.splits),
        main_fraction: ssri.then_some(args.main_fraction),
        alpha: args.alpha,
        baseline: ssri.then_some(args.baseline),
        level_adjust: ssri.then_some(level(args.level_adjust)),
        cv_folds: args.cv_folds,
        outcome: &args.outcome,
        treatment: &args.treatment,
        seed: args.seed,
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:>10.4}")
    } else {
        format!("{:>10}", "-")
    }
}

fn ri_table(n: usize, r: &GatesResult, c: &ContrastResult) -> String {
    let mut out = String::new();
    let level = 100.0 * (1.0 - r.alpha);
    let _ = writeln!(
        out,
        "GATES by cross-fitted randomization inference (n={n}, K={}, L={}, {level}% CI)",
        r.k_groups, r.l_splits
    );
    let _ = writeln!(out, "learner: {}", r.learner_id);
    let _ = writeln!(
        out,
        "{:>8} {:>10} {:>10} {:>10} {:>10}",
        "group", "estimate", "ci_lower", "ci_upper", "variance"
    );
    for g in 0..r.k_groups {
        let _ = writeln!(
            out,
            "{:>8} {} {} {} {}",
            g + 1,
            fmt_num(r.gamma_hat[g]),
            fmt_num(r.ci_lower[g]),
            fmt_num(r.ci_upper[g]),
            fmt_num(r.variance[g])
        );
    }
    let _ = writeln!(
        out,
        "{:>8} {} {} {} {}",
        format!("{}-{}", c.first_group, c.second_group),
        fmt_num(c.estimate),
        fmt_num(c.ci_lower),
        fmt_num(c.ci_upper),
        fmt_num(c.variance)
    );
    let _ = writeln!(out, "group 1 holds the highest proxy scores");
    out
}

fn ssri_table(n: usize, r: &SsriResult) -> String {
    let mut out = String::new();
    let level = 100.0 * (1.0 - r.alpha);
    let b = if r.baseline { "with" } else { "without" };
    let _ = writeln!(
        out,
        "GATES by split-sample robust inference (n={n}, K={}, S={}, main fraction {}, {b} baseline, {level}% CI)",
        r.k_groups, r.n_splits, r.main_fraction
    );
    let _ = writeln!(out, "learner: {}", r.learner_id);
    let _ = writeln!(
        out,
        "{:>8} {:>10} {:>10} {:>10} {:>10}",
        "group", "mean", "median", "ci_lower", "ci_upper"
    );
    for g in 0..r.k_groups {
        let _ = writeln!(
            out,
            "{:>8} {} {} {} {}",
            g + 1,
            fmt_num(r.point_mean[g]),
            fmt_num(r.point_median[g]),
            fmt_num(r.ci_lower[g]),
            fmt_num(r.ci_upper[g])
        );
    }
    let _ = writeln!(out, "group 1 holds the highest proxy scores");
    out
}

pub fn run(args: &AnalyzeArgs, argv: &[String]) -> CliResult<()> {
    let settings = settings(args);
    let mut manifest = ManifestBuilder::new(argv, args.seed, &settings)?;
    let bytes = std::fs::read(&args.csv).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::from(gates_core::Error::InputNotFound(args.csv.clone()))
        } else {
            CliError::validation(format!("cannot read {}: {e}", args.csv.display()))
        }
    })?;
    manifest.input(&args.csv, &bytes);
    let data = load_csv(&args.csv, &args.outcome, &args.treatment)?;
    if args.cv_folds < 2 {
        return Err(CliError::validation(format!(
            "--cv-folds must be >= 2, got {}",
            args.cv_folds
        )));
    }
    let learner = LassoTLearner {
        lambda_rule: LambdaRule::Cv { folds: args.cv_folds },
    };

    let (output, table) = match args.method {
        Method::Ri => {
            let cfg = CrossFitConfig::new(args.l, args.k, args.alpha, args.seed);
            let gates = cross_fit_gates(&data, &cfg, &learner)?;
            let contrast = heterogeneity_contrast(&gates)?;
            let table = ri_table(data.n(), &gates, &contrast);
            (
                AnalyzeOutput::Ri {
                    n: data.n(),
                    gates,
                    contrast,
                },
                table,
            )
        }
        Method::Ssri => {
            let mut cfg = SsriConfig::new(args.splits, args.main_fraction, args.k, args.alpha, args.seed)
                .with_baseline(args.baseline)
                .with_level_adjust(level(args.level_adjust));
            cfg.baseline_cv_folds = args.cv_folds;
            let gates = ssri_gates(&data, &cfg, &learner)?;
            let table = ssri_table(data.n(), &gates);
            (AnalyzeOutput::Ssri { n: data.n(), gates }, table)
        }
    };

    print!("{table}");
    if let Some(dir) = &args.out {
        write_outputs(dir, &output, &table, manifest)?;
    }
    Ok(())
}

fn write_outputs(dir: &Path, output: &AnalyzeOutput, table: &str, manifest: ManifestBuilder) -> CliResult<()> {
    ensure_dir(dir)?;
    write_json(&dir.join("result.json"), output)?;
    write_file(&dir.join("table.txt"), table.as_bytes())?;
    write_json(
        &dir.join("manifest.json"),
        &manifest.finish(&["result.json", "table.txt"]),
    )
}
