//! Proxy-score learners.
//!
//! The estimators only need a score that ranks units by predicted treatment
//! effect; they stay valid whether or not the score is a good CATE estimate.
//! The shipped learner is a LASSO T-learner: separate fits on the treated and
//! control arms, score = difference of the two predictions.

pub mod lasso;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::ExperimentDataset;
use crate::error::{Error, Result};
use lasso::{lasso_cv_model, lasso_fit_model, LassoFit};

/// A trained ranking score `S(z)`.
pub trait ProxyScore: Send + Sync {
    fn score(&self, z: ArrayView1<'_, f64>) -> f64;

    fn score_rows(&self, z: ArrayView2<'_, f64>) -> Vec<f64> {
        z.rows().into_iter().map(|r| self.score(r)).collect()
    }
}

impl<F> ProxyScore for F
where
    F: Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync,
{
    fn score(&self, z: ArrayView1<'_, f64>) -> f64 {
        self(z)
    }
}

/// Something that trains a [`ProxyScore`] on a training subset.
pub trait ProxyLearner: Send + Sync {
    /// Stable identifier recorded in results.
    fn id(&self) -> String;

    fn fit(&self, train: &ExperimentDataset) -> Result<Box<dyn ProxyScore>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed(f64),
    Cv { folds: usize },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Cv { folds: 5 }
    }
}

impl LambdaRule {
    fn fit(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<LassoFit> {
        match *self {
            LambdaRule::Fixed(lambda) => lasso_fit_model(x, y, lambda),
            LambdaRule::Cv { folds } => lasso_cv_model(x, y, folds),
        }
    }

    fn describe(&self) -> String {
        match self {
            LambdaRule::Fixed(l) => format!("lambda={l}"),
            LambdaRule::Cv { folds } => format!("cv={folds}"),
        }
    }
}

/// T-learner CATE proxy: `S(z) = μ̂₁(z) - μ̂₀(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub treated: LassoFit,
    pub control: LassoFit,
}

impl ScoreModel {
    pub fn coef_treated(&self) -> Vec<f64> {
        self.treated.coefficients()
    }

    pub fn coef_control(&self) -> Vec<f64> {
        self.control.coefficients()
    }
}

impl ProxyScore for ScoreModel {
    fn score(&self, z: ArrayView1<'_, f64>) -> f64 {
        self.treated.predict(z) - self.control.predict(z)
    }
}

fn check_arm(arm: &'static str, got: usize) -> Result<()> {
    if got < 2 {
        return Err(Error::ArmTooSmall { arm, required: 2, got });
    }
    Ok(())
}

/// Fits one LASSO per arm and returns their difference as the proxy score.
pub fn fit_proxy(train: &ExperimentDataset, rule: LambdaRule) -> Result<ScoreModel> {
    check_arm("treated", train.n_treated())?;
    check_arm("control", train.n_control())?;
    let (z1, y1) = train.arm(true);
    let (z0, y0) = train.arm(false);
    Ok(ScoreModel {
        treated: rule.fit(z1.view(), &y1)?,
        control: rule.fit(z0.view(), &y0)?,
    })
}

/// Control-arm outcome model `B̂(z)` used for baseline adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub fit: LassoFit,
}

impl BaselineModel {
    pub fn predict(&self, z: ArrayView1<'_, f64>) -> f64 {
        self.fit.predict(z)
    }

    pub fn coef(&self) -> Vec<f64> {
        self.fit.coefficients()
    }
}

/// Cross-validated LASSO of the outcome on covariates among control units.
pub fn fit_baseline(train: &ExperimentDataset, cv_folds: usize) -> Result<BaselineModel> {
    check_arm("control", train.n_control())?;
    let (z0, y0) = train.arm(false);
    Ok(BaselineModel {
        fit: lasso_cv_model(z0.view(), &y0, cv_folds)?,
    })
}

/// The default learner: LASSO T-learner with a configurable penalty rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LassoTLearner {
    pub lambda_rule: LambdaRule,
}

impl ProxyLearner for LassoTLearner {
    fn id(&self) -> String {
        format!("lasso-t-learner({})", self.lambda_rule.describe())
    }

    fn fit(&self, train: &ExperimentDataset) -> Result<Box<dyn ProxyScore>> {
        Ok(Box::new(fit_proxy(train, self.lambda_rule)?))
    }
}
