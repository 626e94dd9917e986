use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gates_core::sim::SimulationReport;
use serde::Serialize;

use crate::manifest::{ensure_dir, write_file, write_json, ManifestBuilder};
use crate::plot::{render, Series};
use crate::{CliError, CliResult, ReportArgs};

#[derive(Debug, Serialize)]
struct ComparisonRow<'a> {
    source: String,
    dgp: &'a str,
    method: &'a str,
    n: usize,
    group: usize,
    coverage: f64,
    avg_ci_length: f64,
    bias: f64,
    truth: f64,
    mean_estimate: f64,
    replicates: usize,
}

/// Red for RI, black for SSRI with the baseline adjustment, blue without.
fn color(method: &str) -> &'static str {
    if method.starts_with("RI") {
        "red"
    } else if method.starts_with("SSRI") && method.contains("no-baseline") {
        "blue"
    } else if method.starts_with("SSRI") {
        "black"
    } else {
        "gray"
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn load(path: &Path) -> CliResult<SimulationReport> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::from(gates_core::Error::InputNotFound(path.to_path_buf()))
        } else {
            CliError::validation(format!("cannot read {}: {e}", path.display()))
        }
    })?;
    let report: SimulationReport = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::validation(format!("malformed report {}: {e}", path.display())))?;
    if report.cells.is_empty() {
        return Err(CliError::validation(format!(
            "malformed report {}: no cells",
            path.display()
        )));
    }
    if report
        .cells
        .iter()
        .any(|c| c.group == 0 || c.group > report.config.k_groups)
    {
        return Err(CliError::validation(format!(
            "malformed report {}: group outside 1..={}",
            path.display(),
            report.config.k_groups
        )));
    }
    Ok(report)
}

struct Figure<'a> {
    alpha: f64,
    k_groups: usize,
    /// (report index, method label) in first-seen order.
    series: Vec<(usize, &'a str)>,
}

pub fn run(args: &ReportArgs, argv: &[String]) -> CliResult<()> {
    if args.reports.is_empty() {
        return Err(CliError::validation("no report files given"));
    }
    let mut manifest = ManifestBuilder::new(argv, 0, &args.reports)?;
    let mut reports = Vec::new();
    for path in &args.reports {
        let report = load(path)?;
        manifest.input(path, &fs::read(path).unwrap_or_default());
        reports.push(report);
    }
    let sources: Vec<String> = args.reports.iter().map(|p| p.display().to_string()).collect();

    // one figure per (dgp, n)
    let mut figures: BTreeMap<(String, usize), Figure> = BTreeMap::new();
    for (ri, report) in reports.iter().enumerate() {
        for n in report.sample_sizes() {
            let fig = figures.entry((report.dgp_name.clone(), n)).or_insert(Figure {
                alpha: report.config.alpha,
                k_groups: 0,
                series: Vec::new(),
            });
            fig.k_groups = fig.k_groups.max(report.config.k_groups);
            for cell in report.cells.iter().filter(|c| c.n == n) {
                let key = (ri, cell.method.as_str());
                if !fig.series.contains(&key) {
                    fig.series.push(key);
                }
            }
        }
    }

    ensure_dir(&args.out_dir)?;
    let mut outputs = Vec::new();
    for ((dgp, n), fig) in &figures {
        let mut family_count: BTreeMap<&str, usize> = BTreeMap::new();
        let series: Vec<Series> = fig
            .series
            .iter()
            .map(|&(ri, method)| {
                let duplicate = fig.series.iter().filter(|(_, m)| *m == method).count() > 1;
                let c = color(method);
                let slot = family_count.entry(c).or_insert(0);
                let marker = *slot;
                *slot += 1;
                let mut coverage = vec![None; fig.k_groups];
                let mut length = vec![None; fig.k_groups];
                for cell in reports[ri].cells_for(method, *n) {
                    coverage[cell.group - 1] = Some(cell.coverage);
                    length[cell.group - 1] = Some(cell.avg_ci_length);
                }
                Series {
                    label: if duplicate {
                        format!("{method} [{}]", sources[ri])
                    } else {
                        method.to_string()
                    },
                    color: c,
                    marker,
                    coverage,
                    length,
                }
            })
            .collect();
        let svg = render(&format!("{dgp} DGP, n = {n}"), 1.0 - fig.alpha, fig.k_groups, &series);
        let name = format!("{}_n{n}.svg", slug(dgp));
        write_file(&args.out_dir.join(&name), svg.as_bytes())?;
        outputs.push(name);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    for (ri, report) in reports.iter().enumerate() {
        for cell in &report.cells {
            w.serialize(ComparisonRow {
                source: sources[ri].clone(),
                dgp: &report.dgp_name,
                method: &cell.method,
                n: cell.n,
                group: cell.group,
                coverage: cell.coverage,
                avg_ci_length: cell.avg_ci_length,
                bias: cell.bias,
                truth: cell.truth,
                mean_estimate: cell.mean_estimate,
                replicates: cell.replicates,
            })
            .map_err(|e| CliError::validation(format!("cannot write comparison table: {e}")))?;
        }
    }
    let table = w
        .into_inner()
        .map_err(|e| CliError::validation(format!("cannot write comparison table: {e}")))?;
    write_file(&args.out_dir.join("comparison.csv"), &table)?;
    outputs.push("comparison.csv".into());

    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_json(&args.out_dir.join("manifest.json"), &manifest.finish(&names))?;
    for name in &outputs {
        println!("wrote {}", args.out_dir.join(name).display());
    }
    Ok(())
}
