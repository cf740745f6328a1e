//! Point estimators of the treatment effect.
//!
//! All estimators are differences of arm means, optionally augmented by
//! per-arm OLS working models `ĥ_0`, `ĥ_1` fit on an adjustment set of
//! baseline covariates and/or negative control outcomes:
//!
//! ```text
//! ψ̂_AIPW = ψ̂_plug-in − (1/n) Σ (A_i − π̂) [ ĥ_0(Z_i)/(1 − π̂) + ĥ_1(Z_i)/π̂ ]
//! ```
//!
//! with `π̂ = n1/n`. Lin's estimator of the sample average treatment effect
//! centers the predictors at their full-sample means and subtracts the
//! per-arm slope adjustment; with per-arm OLS both forms agree exactly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{empirical_quantile, NamedColumns, TrialDataset};
use crate::error::{Error, Result};
use crate::inference::Correction;
use crate::ols::{fit_arm_raw, WorkingModelFit};

/// Columns used as working-model predictors.
///
/// An empty spec gives intercept-only working models, i.e. the plug-in
/// estimator. "Fully adjusted" is simply a spec naming both covariates and
/// NCOs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustmentSpec {
    pub covariate_columns: Vec<String>,
    pub nco_columns: Vec<String>,
    /// Replace each NCO by its pooled empirical quantile before fitting.
    #[serde(default)]
    pub quantile_transform_ncos: bool,
}

impl AdjustmentSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn covariates<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            covariate_columns: names.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn ncos<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            nco_columns: names.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn with_covariates<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.covariate_columns = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn quantile(mut self, on: bool) -> Self {
        self.quantile_transform_ncos = on;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.covariate_columns.is_empty() && self.nco_columns.is_empty()
    }

    pub fn n_predictors(&self) -> usize {
        self.covariate_columns.len() + self.nco_columns.len()
    }

    /// Materializes the predictor matrix, applying the quantile transform
    /// to NCO columns when requested.
    pub fn predictors(&self, data: &TrialDataset) -> Result<NamedColumns> {
        let mut names = Vec::with_capacity(self.n_predictors());
        let mut columns = Vec::with_capacity(self.n_predictors());
        for name in &self.covariate_columns {
            let col = data
                .covariates()
                .get(name)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
            names.push(name.clone());
            columns.push(col.to_vec());
        }
        for name in &self.nco_columns {
            let col = data
                .ncos()
                .get(name)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
            if self.quantile_transform_ncos {
                names.push(format!("quantile({name})"));
                columns.push(empirical_quantile(col));
            } else {
                names.push(name.clone());
                columns.push(col.to_vec());
            }
        }
        NamedColumns::new(names, columns)
    }

    /// Short label such as `plug-in`, `cov`, `nco`, `qnco`, `cov+nco`.
    pub fn label(&self) -> String {
        match (self.covariate_columns.is_empty(), self.nco_columns.is_empty()) {
            (true, true) => "plug-in".into(),
            (false, true) => "cov".into(),
            (true, false) if self.quantile_transform_ncos => "qnco".into(),
            (true, false) => "nco".into(),
            (false, false) if self.quantile_transform_ncos => "cov+qnco".into(),
            (false, false) => "cov+nco".into(),
        }
    }
}

impl fmt::Display for AdjustmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Target of estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Estimand {
    /// Superpopulation average treatment effect (AIPW form).
    Ate,
    /// Sample average treatment effect (Lin form).
    Sate,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimand::Ate => "ATE",
            Estimand::Sate => "SATE",
        })
    }
}

/// Point estimate with interval, test, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimand: Estimand,
    pub estimate: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub wald_p: f64,
    pub correction: Correction,
    pub adjustment: AdjustmentSpec,
    pub pi_hat: f64,
    pub level: f64,
}

/// A fitted adjusted estimator: the estimate plus the working models that
/// produced it, which the variance estimators reuse.
#[derive(Debug, Clone)]
pub struct AdjustedFit {
    pub estimand: Estimand,
    pub estimate: f64,
    pub pi_hat: f64,
    pub fit0: WorkingModelFit,
    pub fit1: WorkingModelFit,
    pub n: usize,
}

fn arm_sums(treatment: &[u8], y: &[f64]) -> Result<(f64, usize, f64, usize)> {
    if treatment.len() != y.len() {
        return Err(Error::DimensionMismatch("treatment and outcome lengths differ".into()));
    }
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&a, &v) in treatment.iter().zip(y) {
        if a == 1 {
            s1 += v;
            n1 += 1;
        } else {
            s0 += v;
            n0 += 1;
        }
    }
    if n1 == 0 {
        return Err(Error::EmptyArm(1));
    }
    if n0 == 0 {
        return Err(Error::EmptyArm(0));
    }
    Ok((s1, n1, s0, n0))
}

/// Arm means `(Ȳ(0), Ȳ(1))`.
pub fn arm_means(treatment: &[u8], y: &[f64]) -> Result<(f64, f64)> {
    let (s1, n1, s0, n0) = arm_sums(treatment, y)?;
    Ok((s0 / n0 as f64, s1 / n1 as f64))
}

/// Difference in arm means on raw vectors.
pub fn plug_in_raw(treatment: &[u8], y: &[f64]) -> Result<f64> {
    let (m0, m1) = arm_means(treatment, y)?;
    Ok(m1 - m0)
}

/// `Ȳ(1) − Ȳ(0)`, which equals the inverse-probability form with `π̂`.
pub fn plug_in(data: &TrialDataset) -> f64 {
    plug_in_raw(data.treatment(), data.outcome()).expect("validated dataset has both arms")
}

/// AIPW estimate for arbitrary working-model predictions `h0`, `h1`
/// evaluated at every unit.
pub fn aipw_from_predictions(treatment: &[u8], y: &[f64], h0: &[f64], h1: &[f64]) -> Result<f64> {
    let n = treatment.len();
    if h0.len() != n || h1.len() != n {
        return Err(Error::DimensionMismatch("working-model predictions must cover all units".into()));
    }
    let plug = plug_in_raw(treatment, y)?;
    let pi_hat = treatment.iter().filter(|&&a| a == 1).count() as f64 / n as f64;
    let augmentation: f64 = (0..n)
        .map(|i| (treatment[i] as f64 - pi_hat) * (h0[i] / (1.0 - pi_hat) + h1[i] / pi_hat))
        .sum::<f64>()
        / n as f64;
    Ok(plug - augmentation)
}

/// AIPW estimator with per-arm OLS working models on raw vectors.
pub fn aipw_raw(treatment: &[u8], y: &[f64], predictors: &NamedColumns) -> Result<AdjustedFit> {
    let fit0 = fit_arm_raw(treatment, y, predictors, 0)?;
    let fit1 = fit_arm_raw(treatment, y, predictors, 1)?;
    let n = treatment.len();
    let pi_hat = fit1.n_arm as f64 / n as f64;
    // Intercept-only working models are constant, so the augmentation is
    // identically zero; skip it to return the plug-in bit for bit.
    let estimate = if predictors.is_empty() {
        plug_in_raw(treatment, y)?
    } else {
        aipw_from_predictions(treatment, y, &fit0.fitted_all, &fit1.fitted_all)?
    };
    Ok(AdjustedFit {
        estimand: Estimand::Ate,
        estimate,
        pi_hat,
        fit0,
        fit1,
        n,
    })
}

pub fn aipw(data: &TrialDataset, spec: &AdjustmentSpec) -> Result<AdjustedFit> {
    let predictors = spec.predictors(data)?;
    aipw_raw(data.treatment(), data.outcome(), &predictors)
}

/// Lin's estimator for given slope vectors `beta0`, `beta1` (one entry per
/// predictor); predictors are centered at their full-sample means.
pub fn lin_from_slopes(
    treatment: &[u8],
    y: &[f64],
    predictors: &NamedColumns,
    beta0: &[f64],
    beta1: &[f64],
) -> Result<f64> {
    let p = predictors.len();
    if beta0.len() != p || beta1.len() != p {
        return Err(Error::DimensionMismatch("slope vectors must match predictor count".into()));
    }
    let n = treatment.len();
    let means: Vec<f64> = predictors
        .columns()
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let adjusted = |i: usize, beta: &[f64]| -> f64 {
        let shift: f64 = predictors
            .columns()
            .iter()
            .zip(&means)
            .zip(beta)
            .map(|((c, m), b)| b * (c[i] - m))
            .sum();
        y[i] - shift
    };
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        if treatment[i] == 1 {
            s1 += adjusted(i, beta1);
            n1 += 1;
        } else {
            s0 += adjusted(i, beta0);
            n0 += 1;
        }
    }
    if n1 == 0 {
        return Err(Error::EmptyArm(1));
    }
    if n0 == 0 {
        return Err(Error::EmptyArm(0));
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

/// Lin's linearly adjusted SATE estimator with per-arm OLS slopes.
pub fn lin_sate_raw(treatment: &[u8], y: &[f64], predictors: &NamedColumns) -> Result<AdjustedFit> {
    let fit0 = fit_arm_raw(treatment, y, predictors, 0)?;
    let fit1 = fit_arm_raw(treatment, y, predictors, 1)?;
    let n = treatment.len();
    let estimate = if predictors.is_empty() {
        plug_in_raw(treatment, y)?
    } else {
        lin_from_slopes(treatment, y, predictors, fit0.slopes(), fit1.slopes())?
    };
    Ok(AdjustedFit {
        estimand: Estimand::Sate,
        estimate,
        pi_hat: fit1.n_arm as f64 / n as f64,
        fit0,
        fit1,
        n,
    })
}

pub fn lin_sate(data: &TrialDataset, spec: &AdjustmentSpec) -> Result<AdjustedFit> {
    let predictors = spec.predictors(data)?;
    lin_sate_raw(data.treatment(), data.outcome(), &predictors)
}

/// Dispatches on the estimand.
pub fn fit_estimator(data: &TrialDataset, spec: &AdjustmentSpec, estimand: Estimand) -> Result<AdjustedFit> {
    match estimand {
        Estimand::Ate => aipw(data, spec),
        Estimand::Sate => lin_sate(data, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(treatment: Vec<u8>, x: Vec<f64>, nco: Vec<f64>, y: Vec<f64>) -> TrialDataset {
        TrialDataset::new(
            treatment,
            NamedColumns::new(vec!["X".into()], vec![x]).unwrap(),
            NamedColumns::new(vec!["N".into()], vec![nco]).unwrap(),
            y,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn plug_in_arm_means() {
        assert_eq!(plug_in_raw(&[1, 1, 0], &[2.0, 4.0, 1.0]).unwrap(), 2.0);
        let d = data(vec![1, 0, 1, 0], vec![0.0; 4], vec![1.0, 2.0, 3.0, 4.0], vec![7.0; 4]);
        assert_eq!(plug_in(&d), 0.0);
        assert!(matches!(plug_in_raw(&[1, 1], &[1.0, 2.0]), Err(Error::EmptyArm(0))));
    }

    #[test]
    fn zero_working_models_give_plug_in() {
        let t = [1, 0, 1, 1, 0, 0, 1];
        let y = [2.0, 1.0, 3.5, 0.2, -1.0, 4.0, 2.2];
        let zeros = [0.0; 7];
        let a = aipw_from_predictions(&t, &y, &zeros, &zeros).unwrap();
        assert_eq!(a, plug_in_raw(&t, &y).unwrap());
        let preds = NamedColumns::new(vec!["z".into()], vec![vec![1.0, 2.0, 0.5, 3.0, 1.5, 2.0, 0.1]]).unwrap();
        let l = lin_from_slopes(&t, &y, &preds, &[0.0], &[0.0]).unwrap();
        assert!((l - plug_in_raw(&t, &y).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn empty_spec_is_plug_in_exactly() {
        let d = data(
            vec![1, 0, 1, 1, 0, 0, 1],
            vec![0.3, 1.0, -2.0, 0.5, 0.1, 0.7, 1.1],
            vec![1.0, 2.0, 0.5, 3.0, 1.5, 2.0, 0.1],
            vec![2.0, 1.0, 3.5, 0.2, -1.0, 4.0, 2.2],
        );
        assert_eq!(aipw(&d, &AdjustmentSpec::none()).unwrap().estimate, plug_in(&d));
        assert_eq!(lin_sate(&d, &AdjustmentSpec::none()).unwrap().estimate, plug_in(&d));
    }

    #[test]
    fn centered_predictors_are_idempotent() {
        let t = [1, 0, 1, 1, 0, 0, 1, 0];
        let y = [2.0, 1.0, 3.5, 0.2, -1.0, 4.0, 2.2, 0.0];
        let z = vec![1.0, 2.0, 0.5, 3.0, 1.5, 2.0, 0.1, 1.9];
        let mean = z.iter().sum::<f64>() / 8.0;
        let zc: Vec<f64> = z.iter().map(|v| v - mean).collect();
        let p = NamedColumns::new(vec!["z".into()], vec![z]).unwrap();
        let pc = NamedColumns::new(vec!["z".into()], vec![zc]).unwrap();
        let a = lin_sate_raw(&t, &y, &p).unwrap().estimate;
        let b = lin_sate_raw(&t, &y, &pc).unwrap().estimate;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn unknown_column_in_spec() {
        let d = data(vec![1, 0, 1, 0], vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0], vec![1.0; 4]);
        assert!(matches!(aipw(&d, &AdjustmentSpec::ncos(["X"])), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn labels() {
        assert_eq!(AdjustmentSpec::none().label(), "plug-in");
        assert_eq!(AdjustmentSpec::ncos(["N"]).quantile(true).label(), "qnco");
        assert_eq!(AdjustmentSpec::ncos(["N"]).with_covariates(["X"]).label(), "cov+nco");
    }
}
