use std::fs;
use std::path::{Path, PathBuf};

use gates_core::sim::{run_monte_carlo, SimulationConfig};

use crate::manifest::{ensure_dir, write_file, write_json, ManifestBuilder};
use crate::{CliError, CliResult, SimulateArgs};

pub const CONFIG_HELP: &str = "\
CONFIG KEYS (TOML):
  seed = 0                      base seed; every replicate seed derives from it
  sample_sizes = [100, 500, 2500]
  k_groups = 5
  n_replicates = 200            replicates scored for coverage, length and bias
  truth_replicates = 1000       replicates averaged for the reported truth
  truth_population = 100000     population draw used to evaluate each proxy
  alpha = 0.05

  [dgp]
  kind = \"linear\"               linear | polynomial | step_change | constant
  effect = 0.0                  constant only
  p = 10                        covariates (>= 4)
  noise_sd = 1.0
  treat_prob = 0.5

  [learner]                     optional; default is the cross-validated LASSO
  learner = \"lasso\"             lasso | oracle
  lambda_rule = { cv = { folds = 5 } }    or { fixed = 0.1 }

  [[methods]]
  method = \"ri\"
  l = 3

  [[methods]]
  method = \"ssri\"
  splits = 250
  main_fraction = 0.33
  baseline = true               default false
  level_adjust = \"halved\"       halved | nominal

OUTPUTS (in --out-dir):
  report.json   coverage, average CI length, bias and truth per method, n and group;
                byte-identical for identical configs
  report.csv    the same cells as a flat table
  timing.json   CPU seconds per method and n
  manifest.json command, version, seed, digests and timestamps";

const OUTPUTS: [&str; 4] = ["report.json", "report.csv", "timing.json", "manifest.json"];

pub fn load_config(path: &Path) -> CliResult<(SimulationConfig, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::from(gates_core::Error::InputNotFound(path.to_path_buf()))
        } else {
            CliError::validation(format!("cannot read {}: {e}", path.display()))
        }
    })?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::validation(format!("{} is not valid UTF-8", path.display())))?;
    let cfg: SimulationConfig = toml::from_str(text)
        .map_err(|e| CliError::validation(format!("invalid config {}: {}", path.display(), e.message())))?;
    cfg.validate()?;
    Ok((cfg, bytes))
}

pub fn run(args: &SimulateArgs, argv: &[String]) -> CliResult<()> {
    let (cfg, bytes) = load_config(&args.config)?;
    let mut manifest = ManifestBuilder::new(argv, cfg.seed, &cfg)?;
    manifest.input(&args.config, &bytes);

    let output = run_monte_carlo(&cfg)?;

    let created_dir = !args.out_dir.exists();
    ensure_dir(&args.out_dir)?;
    let paths: Vec<PathBuf> = OUTPUTS.iter().map(|f| args.out_dir.join(f)).collect();
    let written = (|| {
        write_json(&paths[0], &output.report)?;
        let mut csv = Vec::new();
        output.report.write_csv(&mut csv)?;
        write_file(&paths[1], &csv)?;
        write_json(&paths[2], &output.timing)?;
        write_json(&paths[3], &manifest.finish(&OUTPUTS[..3]))
    })();
    if let Err(e) = written {
        for p in &paths {
            let _ = fs::remove_file(p);
        }
        if created_dir {
            let _ = fs::remove_dir(&args.out_dir);
        }
        return Err(e);
    }

    for s in &output.report.summaries {
        eprintln!(
            "{} n={}: {} replicates, {} failures",
            s.method, s.n, s.replicates_ok, s.failures
        );
    }
    println!("wrote {}", args.out_dir.display());
    Ok(())
}
