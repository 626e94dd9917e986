//! Coordinate-descent LASSO on standardized covariates.
//!
//! The solver works on sufficient statistics: with centered, unit-variance
//! columns `x̃` and centered outcome `ỹ`, the objective
//!
//! ```text
//! (1/2m) ||y - b0 - X b||² + λ ||b||₁
//! ```
//!
//! becomes `½ (ỹᵀỹ/m - 2 cᵀb + bᵀ G b) + λ ||b||₁` with `G = x̃ᵀx̃/m` and
//! `c = x̃ᵀỹ/m`, so one coordinate update costs `O(p)` instead of `O(m)`.
//! The intercept is unpenalized and equals the outcome mean on the
//! standardized scale.

use ndarray::{ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 10_000;
pub const GRID_POINTS: usize = 50;
pub const GRID_RATIO: f64 = 1e-3;

/// `sign(z) * max(|z| - gamma, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Column means and population standard deviations of a training matrix.
/// A zero scale marks a constant column, whose coefficient is pinned at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let m = x.nrows().max(1) as f64;
        let means: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / m).collect();
        let scales = x
            .axis_iter(Axis(1))
            .zip(&means)
            .map(|(c, &mu)| {
                let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
                // relative threshold so that numerically constant columns count as constant
                if var.sqrt() <= 1e-12 * (1.0 + mu.abs()) {
                    0.0
                } else {
                    var.sqrt()
                }
            })
            .collect();
        Self { means, scales }
    }
}

/// Standardized sufficient statistics of one regression problem.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    p: usize,
    m: usize,
    gram: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
    y_mean: f64,
    standardization: Standardization,
}

impl LassoProblem {
    pub fn new(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<Self> {
        let (m, p) = x.dim();
        if y.len() != m {
            return Err(Error::Dimension(format!("x has {m} rows but y has {}", y.len())));
        }
        if m == 0 {
            return Err(Error::TooFewUnits { required: 1, got: 0 });
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Learner("non-finite input to lasso".into()));
        }
        let standardization = Standardization::fit(x);
        let mf = m as f64;
        let y_mean = y.iter().sum::<f64>() / mf;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

        // standardized copy, column-major for cache-friendly inner products
        let mut cols = vec![0.0; m * p];
        for j in 0..p {
            let (mu, s) = (standardization.means[j], standardization.scales[j]);
            if s > 0.0 {
                for (i, v) in x.column(j).iter().enumerate() {
                    cols[j * m + i] = (v - mu) / s;
                }
            }
        }
        let col = |j: usize| &cols[j * m..(j + 1) * m];
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();

        let mut gram = vec![0.0; p * p];
        for j in 0..p {
            for k in j..p {
                let g = dot(col(j), col(k)) / mf;
                gram[j * p + k] = g;
                gram[k * p + j] = g;
            }
        }
        let xty = (0..p).map(|j| dot(col(j), &yc) / mf).collect();
        let yty = dot(&yc, &yc) / mf;
        Ok(Self {
            p,
            m,
            gram,
            xty,
            yty,
            y_mean,
            standardization,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    /// Smallest penalty at which every slope is zero: `max_j |x̃_jᵀ(y - ȳ)| / m`.
    pub fn lambda_max(&self) -> f64 {
        self.xty.iter().fold(0.0_f64, |a, c| a.max(c.abs()))
    }

    fn usable(&self, j: usize) -> bool {
        self.standardization.scales[j] > 0.0
    }

    /// Penalized objective on the standardized scale.
    pub fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let p = self.p;
        let mut quad = 0.0;
        for j in 0..p {
            let gb: f64 = (0..p).map(|k| self.gram[j * p + k] * beta[k]).sum();
            quad += beta[j] * gb;
        }
        let lin: f64 = self.xty.iter().zip(beta).map(|(c, b)| c * b).sum();
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        0.5 * (self.yty - 2.0 * lin + quad) + lambda * l1
    }

    /// `x̃_jᵀ r / m` for the residual `r = ỹ - x̃ b`, per column.
    pub fn residual_correlations(&self, beta: &[f64]) -> Vec<f64> {
        let p = self.p;
        (0..p)
            .map(|j| self.xty[j] - (0..p).map(|k| self.gram[j * p + k] * beta[k]).sum::<f64>())
            .collect()
    }

    pub fn solver(&self) -> CoordinateDescent<'_> {
        CoordinateDescent {
            problem: self,
            beta: vec![0.0; self.p],
            gb: vec![0.0; self.p],
            sweeps: 0,
        }
    }

    /// Converts standardized slopes into an original-scale fit.
    pub fn to_fit(&self, beta: &[f64], lambda: f64, sweeps: usize) -> LassoFit {
        let slopes: Vec<f64> = beta
            .iter()
            .zip(&self.standardization.scales)
            .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
            .collect();
        let intercept = self.y_mean
            - slopes
                .iter()
                .zip(&self.standardization.means)
                .map(|(b, mu)| b * mu)
                .sum::<f64>();
        LassoFit {
            intercept,
            slopes,
            standardized: beta.to_vec(),
            lambda,
            sweeps,
            standardization: self.standardization.clone(),
        }
    }
}

/// Cyclic coordinate descent state; keeps `G b` current so each update is `O(p)`.
/// Reusing one solver across decreasing penalties gives warm starts.
#[derive(Debug, Clone)]
pub struct CoordinateDescent<'a> {
    problem: &'a LassoProblem,
    beta: Vec<f64>,
    gb: Vec<f64>,
    sweeps: usize,
}

impl CoordinateDescent<'_> {
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// One pass over all coordinates; returns the largest coefficient change.
    pub fn sweep(&mut self, lambda: f64) -> f64 {
        let pr = self.problem;
        let p = pr.p;
        let mut max_change = 0.0_f64;
        for j in 0..p {
            if !pr.usable(j) {
                continue;
            }
            let gjj = pr.gram[j * p + j];
            let old = self.beta[j];
            // partial correlation with coordinate j removed from the fit
            let z = pr.xty[j] - self.gb[j] + gjj * old;
            let new = soft_threshold(z, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                self.beta[j] = new;
                let row = &pr.gram[j * p..(j + 1) * p];
                for (g, gk) in self.gb.iter_mut().zip(row) {
                    *g += delta * gk;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        self.sweeps += 1;
        max_change
    }

    /// Sweeps until the largest change drops below [`TOLERANCE`] or
    /// [`MAX_SWEEPS`] sweeps have run at this penalty. Returns the sweep count.
    pub fn solve(&mut self, lambda: f64) -> usize {
        for s in 1..=MAX_SWEEPS {
            if self.sweep(lambda) < TOLERANCE {
                return s;
            }
        }
        MAX_SWEEPS
    }
}

/// A fitted LASSO model on the original covariate scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    /// Slopes on the standardized scale (what the penalty acts on).
    pub standardized: Vec<f64>,
    pub lambda: f64,
    pub sweeps: usize,
    pub standardization: Standardization,
}

impl LassoFit {
    pub fn predict(&self, z: ArrayView1<'_, f64>) -> f64 {
        self.intercept + z.iter().zip(&self.slopes).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `[intercept, slope_1, ..., slope_p]`.
    pub fn coefficients(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain(self.slopes.iter().copied())
            .collect()
    }

    fn intercept_only(y: &[f64], p: usize, lambda: f64) -> Self {
        let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
        Self {
            intercept: mean,
            slopes: vec![0.0; p],
            standardized: vec![0.0; p],
            lambda,
            sweeps: 0,
            standardization: Standardization {
                means: vec![0.0; p],
                scales: vec![0.0; p],
            },
        }
    }
}

/// Fits the LASSO at one penalty; returns `[intercept, slopes...]` on the
/// original scale.
pub fn lasso_fit(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    Ok(lasso_fit_model(x, y, lambda)?.coefficients())
}

pub fn lasso_fit_model(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64) -> Result<LassoFit> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let problem = LassoProblem::new(x, y)?;
    let mut cd = problem.solver();
    let sweeps = cd.solve(lambda);
    Ok(problem.to_fit(cd.beta(), lambda, sweeps))
}

/// Log-spaced grid of [`GRID_POINTS`] penalties from `lambda_max` down to
/// `GRID_RATIO * lambda_max`.
pub fn lambda_grid(lambda_max: f64) -> Vec<f64> {
    let last = (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS)
        .map(|i| lambda_max * GRID_RATIO.powf(i as f64 / last))
        .collect()
}

/// Penalty chosen by `k_folds`-fold cross-validated mean squared error over
/// [`lambda_grid`]. Fold membership is `row mod k`, so the choice is a pure
/// function of the data. Ties go to the larger penalty.
pub fn cv_lambda(x: ArrayView2<'_, f64>, y: &[f64], k_folds: usize) -> Result<f64> {
    let full = LassoProblem::new(x, y)?;
    let lambda_max = full.lambda_max();
    let m = y.len();
    let k = k_folds.min(m);
    if lambda_max == 0.0 || k < 2 {
        return Ok(lambda_max);
    }
    let grid = lambda_grid(lambda_max);
    let mut sse = vec![0.0; grid.len()];
    for fold in 0..k {
        let train: Vec<usize> = (0..m).filter(|i| i % k != fold).collect();
        let valid: Vec<usize> = (0..m).filter(|i| i % k == fold).collect();
        let xt = x.select(Axis(0), &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let problem = LassoProblem::new(xt.view(), &yt)?;
        let mut cd = problem.solver();
        for (g, &lambda) in grid.iter().enumerate() {
            cd.solve(lambda);
            let fit = problem.to_fit(cd.beta(), lambda, cd.sweeps());
            sse[g] += valid
                .iter()
                .map(|&i| {
                    let r = y[i] - fit.predict(x.row(i));
                    r * r
                })
                .sum::<f64>();
        }
    }
    let best = sse
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
        )
        .0;
    Ok(grid[best])
}

/// Cross-validated fit: chooses the penalty with [`cv_lambda`], then refits on
/// all rows along the grid down to that penalty.
pub fn lasso_cv_model(x: ArrayView2<'_, f64>, y: &[f64], k_folds: usize) -> Result<LassoFit> {
    let problem = LassoProblem::new(x, y)?;
    let lambda_max = problem.lambda_max();
    if lambda_max == 0.0 {
        return Ok(LassoFit::intercept_only(y, x.ncols(), 0.0));
    }
    let chosen = cv_lambda(x, y, k_folds)?;
    let mut cd = problem.solver();
    for &lambda in lambda_grid(lambda_max).iter().take_while(|&&l| l >= chosen) {
        cd.solve(lambda);
    }
    Ok(problem.to_fit(cd.beta(), chosen, cd.sweeps()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::seed::rng_from_seed;

    fn random_problem(m: usize, p: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let x = Array2::from_shape_fn((m, p), |_| rng.sample::<f64, _>(StandardNormal));
        let y = (0..m)
            .map(|i| 1.5 + 2.0 * x[[i, 0]] - x[[i, p - 1]] + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, y)
    }

    #[test]
    fn soft_threshold_definition() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    #[test]
    fn at_lambda_max_all_slopes_vanish() {
        let (x, y) = random_problem(80, 4, 1);
        let problem = LassoProblem::new(x.view(), &y).unwrap();
        let lmax = problem.lambda_max();
        for lambda in [lmax, lmax * 1.5] {
            let coef = lasso_fit(x.view(), &y, lambda).unwrap();
            assert!(coef[1..].iter().all(|&b| b == 0.0), "{coef:?}");
            let ybar = y.iter().sum::<f64>() / y.len() as f64;
            assert!((coef[0] - ybar).abs() < 1e-12);
        }
        // just below lambda_max something enters
        let coef = lasso_fit(x.view(), &y, lmax * 0.99).unwrap();
        assert!(coef[1..].iter().any(|&b| b != 0.0));
    }

    #[test]
    fn univariate_soft_threshold_before_scaling() {
        // standardized column with x̃ᵀỹ/m = 3 and λ = 1 gives a standardized slope of 2
        let x = array![[1.0], [-1.0], [1.0], [-1.0]];
        let y = vec![3.0, -3.0, 3.0, -3.0];
        let fit = lasso_fit_model(x.view(), &y, 1.0).unwrap();
        assert!((fit.standardized[0] - 2.0).abs() < 1e-12);
        assert!((fit.slopes[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_gets_zero_coefficient() {
        let mut x = Array2::zeros((30, 2));
        for i in 0..30 {
            x[[i, 0]] = i as f64;
            x[[i, 1]] = 4.0;
        }
        let y: Vec<f64> = (0..30).map(|i| 2.0 * i as f64 + 1.0).collect();
        let coef = lasso_fit(x.view(), &y, 0.0).unwrap();
        assert_eq!(coef[2], 0.0);
        assert!((coef[1] - 2.0).abs() < 1e-6);
        assert!((coef[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_input() {
        let x = array![[1.0], [f64::NAN]];
        assert!(lasso_fit(x.view(), &[1.0, 2.0], 0.1).is_err());
        let x = array![[1.0], [2.0]];
        assert!(lasso_fit(x.view(), &[1.0, 2.0], -0.1).is_err());
        assert!(lasso_fit(x.view(), &[1.0], 0.1).is_err());
    }

    #[test]
    fn objective_never_increases_across_sweeps() {
        for seed in 0..20 {
            let (x, y) = random_problem(60, 6, seed);
            let problem = LassoProblem::new(x.view(), &y).unwrap();
            let lambda = 0.05 * problem.lambda_max();
            let mut cd = problem.solver();
            let mut prev = problem.objective(cd.beta(), lambda);
            for _ in 0..50 {
                cd.sweep(lambda);
                let obj = problem.objective(cd.beta(), lambda);
                assert!(obj <= prev + 1e-12, "objective rose from {prev} to {obj}");
                prev = obj;
            }
        }
    }

    #[test]
    fn permuting_columns_permutes_coefficients() {
        let (x, y) = random_problem(70, 5, 3);
        let perm = [3, 0, 4, 1, 2];
        let xp = x.select(Axis(1), &perm);
        let lambda = 0.05;
        let a = lasso_fit(x.view(), &y, lambda).unwrap();
        let b = lasso_fit(xp.view(), &y, lambda).unwrap();
        for (new_j, &old_j) in perm.iter().enumerate() {
            assert!((b[new_j + 1] - a[old_j + 1]).abs() < 1e-6);
        }
        assert!((a[0] - b[0]).abs() < 1e-6);
    }

    #[test]
    fn grid_spans_three_decades() {
        let g = lambda_grid(2.0);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 2.0);
        assert!((g[49] - 2e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn cv_prefers_small_penalty_for_strong_signal() {
        let (x, y) = random_problem(200, 5, 9);
        let problem = LassoProblem::new(x.view(), &y).unwrap();
        let chosen = cv_lambda(x.view(), &y, 5).unwrap();
        assert!(chosen < 0.1 * problem.lambda_max());
        let fit = lasso_cv_model(x.view(), &y, 5).unwrap();
        assert!((fit.slopes[0] - 2.0).abs() < 0.15, "{:?}", fit.slopes);
        assert!((fit.slopes[4] + 1.0).abs() < 0.15, "{:?}", fit.slopes);
    }

    #[test]
    fn cv_handles_tiny_samples() {
        let x = array![[1.0], [2.0]];
        let fit = lasso_cv_model(x.view(), &[1.0, 3.0], 5).unwrap();
        assert!(fit.predict(x.row(0)).is_finite());
        let x = array![[1.0]];
        let fit = lasso_cv_model(x.view(), &[4.0], 5).unwrap();
        assert_eq!(fit.predict(x.row(0)), 4.0);
    }
}
