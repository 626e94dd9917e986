//! Experiment datasets, CSV ingestion and fold planning.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Outcomes, binary treatment and pre-treatment covariates of a randomized
/// experiment.
///
/// Construction validates the data; a value of this type always has at least
/// two units, both arms present and finite outcomes and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDataset {
    y: Vec<f64>,
    d: Vec<bool>,
    z: Array2<f64>,
    unit_ids: Vec<usize>,
}

impl ExperimentDataset {
    /// Validates and builds a dataset with `unit_ids = 0..n`.
    pub fn new(y: Vec<f64>, d: Vec<bool>, z: Array2<f64>) -> Result<Self> {
        let ids = (0..y.len()).collect();
        Self::with_ids(y, d, z, ids)
    }

    pub fn with_ids(y: Vec<f64>, d: Vec<bool>, z: Array2<f64>, unit_ids: Vec<usize>) -> Result<Self> {
        let n = y.len();
        if d.len() != n || z.nrows() != n || unit_ids.len() != n {
            return Err(Error::Dimension(format!(
                "y has {n} rows, d {}, z {}, unit_ids {}",
                d.len(),
                z.nrows(),
                unit_ids.len()
            )));
        }
        if n < 2 {
            return Err(Error::TooFewUnits { required: 2, got: n });
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "outcome", row });
        }
        if let Some((row, _)) = z
            .axis_iter(Axis(0))
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite {
                what: "covariates",
                row,
            });
        }
        let treated = d.iter().filter(|&&t| t).count();
        let control = n - treated;
        if treated == 0 || control == 0 {
            return Err(Error::SingleArm { treated, control });
        }
        Ok(Self { y, d, z, unit_ids })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    pub fn z(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn z_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.z.row(i)
    }

    pub fn unit_ids(&self) -> &[usize] {
        &self.unit_ids
    }

    pub fn n_treated(&self) -> usize {
        self.d.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// Rows at `indices` (in the given order), keeping their unit ids.
    /// Fails if the subset loses an arm or has fewer than two rows.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let y = indices.iter().map(|&i| self.y[i]).collect();
        let d = indices.iter().map(|&i| self.d[i]).collect();
        let z = self.z.select(Axis(0), indices);
        let ids = indices.iter().map(|&i| self.unit_ids[i]).collect();
        Self::with_ids(y, d, z, ids)
    }

    /// Same units and covariates with a replaced outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Self::with_ids(y, self.d.clone(), self.z.clone(), self.unit_ids.clone())
    }

    /// Covariates and outcomes of one arm.
    pub fn arm(&self, treated: bool) -> (Array2<f64>, Vec<f64>) {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.d[i] == treated).collect();
        let z = self.z.select(Axis(0), &idx);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        (z, y)
    }
}

/// Reads a dataset from a headered CSV file.
///
/// `outcome_col` and `treatment_col` are taken by name; every other column
/// becomes a covariate, in file order. Treatment must be the literal `0` or
/// `1`; empty cells are rejected.
pub fn load_csv(path: impl AsRef<Path>, outcome_col: &str, treatment_col: &str) -> Result<ExperimentDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::InputNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_col = find(outcome_col)?;
    let d_col = find(treatment_col)?;
    let z_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != y_col && c != d_col).collect();

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut z = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |c: usize| record.get(c).unwrap_or("").trim();
        let number = |c: usize| -> Result<f64> {
            let raw = cell(c);
            raw.parse::<f64>().map_err(|_| Error::NonNumeric {
                row,
                column: headers[c].clone(),
                value: raw.to_string(),
            })
        };
        y.push(number(y_col)?);
        d.push(match cell(d_col) {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::TreatmentNotBinary {
                    row,
                    value: other.to_string(),
                })
            }
        });
        for &c in &z_cols {
            z.push(number(c)?);
        }
    }
    let n = y.len();
    let z = Array2::from_shape_vec((n, z_cols.len()), z).map_err(|e| Error::Dimension(e.to_string()))?;
    ExperimentDataset::new(y, d, z)
}

/// How units are divided: `L` cross-fitting folds or one main/auxiliary pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    CrossFit { l: usize },
    MainAux { main_fraction: f64 },
}

/// A seeded partition of `0..n`.
///
/// For `CrossFit` the folds are the `L` evaluation folds. For `MainAux`,
/// `folds[0]` is the main (evaluation) sample and `folds[1]` the auxiliary
/// (training) sample. Indices inside each fold are sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl SplitPlan {
    /// Every index outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn n(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }
}

/// Draws a uniformly random partition of `0..n` from `seed`.
///
/// Cross-fitting folds differ in size by at most one; the first `n mod L`
/// folds receive the extra unit. The main sample of a main/auxiliary split
/// has `round(n * main_fraction)` units.
pub fn make_split_plan(n: usize, kind: SplitKind, seed: u64) -> Result<SplitPlan> {
    let sizes = match kind {
        SplitKind::CrossFit { l } => {
            if l < 2 {
                return Err(Error::InvalidSplit(format!("need L >= 2 folds, got {l}")));
            }
            if n < 2 * l {
                return Err(Error::InvalidSplit(format!(
                    "n = {n} is too small for {l} folds (need n >= {})",
                    2 * l
                )));
            }
            let (base, rem) = (n / l, n % l);
            (0..l).map(|f| base + usize::from(f < rem)).collect::<Vec<_>>()
        }
        SplitKind::MainAux { main_fraction } => {
            if !(main_fraction > 0.0 && main_fraction < 1.0) {
                return Err(Error::InvalidSplit(format!(
                    "main fraction must lie in (0, 1), got {main_fraction}"
                )));
            }
            let main = (n as f64 * main_fraction).round() as usize;
            if main == 0 || main >= n {
                return Err(Error::InvalidSplit(format!(
                    "main fraction {main_fraction} leaves an empty fold for n = {n}"
                )));
            }
            vec![main, n - main]
        }
    };

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut folds = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(SplitPlan { kind, folds, seed })
}
