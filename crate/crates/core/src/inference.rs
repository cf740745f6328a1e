//! Variance estimation, Wald intervals, and the robust t statistic.
//!
//! The sandwich variance is `Σ (C_i R_i)²`, where `R_i` are the per-unit
//! influence components of the AIPW estimator and `C_i` are finite-sample
//! correction factors (HC0–HC3). HC2 and HC3 use the leverage of unit `i`
//! in its own arm's working-model regression.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::data::{NamedColumns, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{lin_sate_raw, AdjustedFit, AdjustmentSpec, Estimand, EstimateResult};
use crate::ols::WorkingModelFit;

/// Finite-sample correction applied to the variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Correction {
    #[serde(alias = "hc0")]
    HC0,
    #[serde(alias = "hc1")]
    HC1,
    #[serde(alias = "hc2")]
    HC2,
    #[serde(alias = "hc3")]
    HC3,
    /// Conservative arm-variance sum, `S²_1/n1 + S²_0/n0`, using working-model
    /// residuals when predictors are present.
    #[serde(alias = "neyman")]
    Neyman,
}

impl Correction {
    pub const SANDWICH: [Correction; 4] = [Correction::HC0, Correction::HC1, Correction::HC2, Correction::HC3];
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Correction::HC0 => "HC0",
            Correction::HC1 => "HC1",
            Correction::HC2 => "HC2",
            Correction::HC3 => "HC3",
            Correction::Neyman => "Neyman",
        })
    }
}

impl FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hc0" => Ok(Correction::HC0),
            "hc1" => Ok(Correction::HC1),
            "hc2" => Ok(Correction::HC2),
            "hc3" => Ok(Correction::HC3),
            "neyman" => Ok(Correction::Neyman),
            other => Err(Error::InvalidParameter(format!("unknown correction `{other}`"))),
        }
    }
}

/// Arm-level summaries entering the variance formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmMoments {
    pub s2_0: f64,
    pub s2_1: f64,
    pub n0: usize,
    pub n1: usize,
    pub ybar_0: f64,
    pub ybar_1: f64,
    /// Mean of `ĥ_0` over all `n` units.
    pub hbar_0: f64,
    /// Mean of `ĥ_1` over all `n` units.
    pub hbar_1: f64,
}

impl ArmMoments {
    pub fn compute(treatment: &[u8], y: &[f64], h0: &[f64], h1: &[f64]) -> Result<Self> {
        let n = treatment.len();
        if y.len() != n || h0.len() != n || h1.len() != n {
            return Err(Error::DimensionMismatch("arm moments need length-n inputs".into()));
        }
        let (mut s, mut c) = ([0.0f64; 2], [0usize; 2]);
        for (&a, &v) in treatment.iter().zip(y) {
            s[a as usize] += v;
            c[a as usize] += 1;
        }
        if c[0] == 0 {
            return Err(Error::EmptyArm(0));
        }
        if c[1] == 0 {
            return Err(Error::EmptyArm(1));
        }
        let mean = [s[0] / c[0] as f64, s[1] / c[1] as f64];
        let mut ss = [0.0f64; 2];
        for (&a, &v) in treatment.iter().zip(y) {
            ss[a as usize] += (v - mean[a as usize]).powi(2);
        }
        let var = |k: usize| if c[k] > 1 { ss[k] / (c[k] - 1) as f64 } else { 0.0 };
        Ok(Self {
            s2_0: var(0),
            s2_1: var(1),
            n0: c[0],
            n1: c[1],
            ybar_0: mean[0],
            ybar_1: mean[1],
            hbar_0: h0.iter().sum::<f64>() / n as f64,
            hbar_1: h1.iter().sum::<f64>() / n as f64,
        })
    }
}

/// Influence components `R_i` and correction factors `C_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichComponents {
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub correction: Correction,
}

impl SandwichComponents {
    /// `(C ⊙ R)ᵀ (C ⊙ R)`.
    pub fn variance(&self) -> f64 {
        self.r.iter().zip(&self.c).map(|(r, c)| (c * r).powi(2)).sum()
    }
}

/// Per-unit sandwich components for an AIPW estimate `psi_hat` with
/// working-model predictions `h0`, `h1` at every unit.
pub fn sandwich_r(treatment: &[u8], y: &[f64], h0: &[f64], h1: &[f64], psi_hat: f64) -> Result<Vec<f64>> {
    let m = ArmMoments::compute(treatment, y, h0, h1)?;
    let n = treatment.len() as f64;
    let (n0, n1) = (m.n0 as f64, m.n1 as f64);
    let pi_hat = n1 / n;
    let centering = (m.ybar_0 - m.hbar_0) / n0 + (m.ybar_1 - m.hbar_1) / n1;
    Ok((0..treatment.len())
        .map(|i| {
            let a = treatment[i] as f64;
            let weight = a / n1 - (1.0 - a) / n0;
            weight * y[i] - psi_hat / n - (a - pi_hat) * (h0[i] / n0 + h1[i] / n1) - (a - pi_hat) * centering
        })
        .collect())
}

/// Correction factors `C_i` for a sandwich correction.
pub fn correction_factors(
    kind: Correction,
    treatment: &[u8],
    fit0: &WorkingModelFit,
    fit1: &WorkingModelFit,
) -> Result<Vec<f64>> {
    let n = treatment.len();
    match kind {
        Correction::HC0 => Ok(vec![1.0; n]),
        Correction::HC1 => {
            let mut num = 0.0;
            let mut den = 0.0;
            for fit in [fit0, fit1] {
                let df = fit.n_arm as f64 - fit.p_params as f64 - 1.0;
                if !(df > 0.0) || fit.n_arm < 2 {
                    return Err(Error::NonPositiveDf {
                        arm: fit.arm,
                        n_arm: fit.n_arm,
                        n_params: fit.p_params,
                    });
                }
                num += 1.0 / df;
                den += 1.0 / (fit.n_arm as f64 - 1.0);
            }
            Ok(vec![(num / den).sqrt(); n])
        }
        Correction::HC2 | Correction::HC3 => {
            let mut c = vec![f64::NAN; n];
            for fit in [fit0, fit1] {
                if let Some(unit) = fit.unit_leverage() {
                    return Err(Error::UnitLeverage { arm: fit.arm, unit });
                }
                for (&row, &h) in fit.rows.iter().zip(&fit.leverages) {
                    let inv = 1.0 / (1.0 - h);
                    c[row] = if kind == Correction::HC2 { inv.sqrt() } else { inv };
                }
            }
            if c.iter().any(|v| v.is_nan()) {
                return Err(Error::DimensionMismatch("working-model fits do not cover every unit".into()));
            }
            Ok(c)
        }
        Correction::Neyman => Err(Error::InvalidParameter(
            "Neyman is not a sandwich correction factor".into(),
        )),
    }
}

/// Sandwich components for a fitted estimator.
pub fn sandwich(fit: &AdjustedFit, treatment: &[u8], y: &[f64], correction: Correction) -> Result<SandwichComponents> {
    let r = sandwich_r(treatment, y, &fit.fit0.fitted_all, &fit.fit1.fitted_all, fit.estimate)?;
    let c = correction_factors(correction, treatment, &fit.fit0, &fit.fit1)?;
    Ok(SandwichComponents { r, c, correction })
}

/// `Ŝ²_1/n1 + Ŝ²_0/n0` with plain arm sample variances.
pub fn neyman_variance_raw(treatment: &[u8], y: &[f64]) -> Result<f64> {
    let zeros = vec![0.0; treatment.len()];
    let m = ArmMoments::compute(treatment, y, &zeros, &zeros)?;
    for (arm, n_arm) in [(0u8, m.n0), (1u8, m.n1)] {
        if n_arm < 2 {
            return Err(Error::InsufficientArmSize {
                arm,
                n_arm,
                n_params: 0,
                required: 2,
            });
        }
    }
    Ok(m.s2_1 / m.n1 as f64 + m.s2_0 / m.n0 as f64)
}

pub fn neyman_variance(data: &TrialDataset) -> Result<f64> {
    neyman_variance_raw(data.treatment(), data.outcome())
}

/// `Ŝ²_0/n0 + Ŝ²_1/n1` with `Ŝ²_a` the residual variance of the arm-`a`
/// working model, `(n_a − 1)⁻¹ Σ (Y_i − Ŷ_i)²`. Equals the Neyman variance
/// for intercept-only models.
pub fn residual_arm_variance(fit: &AdjustedFit, y: &[f64]) -> f64 {
    [&fit.fit0, &fit.fit1]
        .iter()
        .map(|f| {
            let ss: f64 = f.residuals(y).iter().map(|r| r * r).sum();
            ss / (f.n_arm as f64 - 1.0) / f.n_arm as f64
        })
        .sum()
}

/// Variance of a fitted estimator under the requested correction.
pub fn variance(fit: &AdjustedFit, treatment: &[u8], y: &[f64], correction: Correction) -> Result<f64> {
    match correction {
        Correction::Neyman => Ok(residual_arm_variance(fit, y)),
        _ => Ok(sandwich(fit, treatment, y, correction)?.variance()),
    }
}

/// Two-sided normal-reference interval and p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wald {
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
}

pub fn wald(estimate: f64, variance: f64, level: f64) -> Wald {
    let se = variance.max(0.0).sqrt();
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let p = if se > 0.0 {
        erfc(estimate.abs() / se / std::f64::consts::SQRT_2).min(1.0)
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    };
    Wald {
        ci_low: estimate - z * se,
        ci_high: estimate + z * se,
        p,
    }
}

/// Lin-adjusted robust t statistic on raw vectors.
pub fn robust_t_raw(treatment: &[u8], y: &[f64], predictors: &NamedColumns) -> Result<f64> {
    let fit = lin_sate_raw(treatment, y, predictors)?;
    let denom = residual_arm_variance(&fit, y);
    // Residual variance at rounding level counts as zero.
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if !(denom > (1e-12 * scale).powi(2)) {
        return Err(Error::ZeroDenominator("robust t statistic has zero variance".into()));
    }
    Ok(fit.estimate / denom.sqrt())
}

/// `T = ψ̂_Lin / sqrt(Ŝ²_0/n0 + Ŝ²_1/n1)`.
pub fn robust_t(data: &TrialDataset, spec: &AdjustmentSpec) -> Result<f64> {
    let predictors = spec.predictors(data)?;
    robust_t_raw(data.treatment(), data.outcome(), &predictors)
}

/// Builds the full result row from a fitted estimator.
pub fn summarize(
    fit: &AdjustedFit,
    treatment: &[u8],
    y: &[f64],
    spec: &AdjustmentSpec,
    correction: Correction,
    level: f64,
) -> Result<EstimateResult> {
    let var = variance(fit, treatment, y, correction)?;
    let w = wald(fit.estimate, var, level);
    Ok(EstimateResult {
        estimand: fit.estimand,
        estimate: fit.estimate,
        variance: var,
        ci_low: w.ci_low,
        ci_high: w.ci_high,
        wald_p: w.p,
        correction,
        adjustment: spec.clone(),
        pi_hat: fit.pi_hat,
        level,
    })
}

/// Fit and infer in one step.
pub fn analyze(
    data: &TrialDataset,
    spec: &AdjustmentSpec,
    estimand: Estimand,
    correction: Correction,
    level: f64,
) -> Result<EstimateResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level {level} must lie in (0, 1)")));
    }
    let fit = crate::estimators::fit_estimator(data, spec, estimand)?;
    summarize(&fit, data.treatment(), data.outcome(), spec, correction, level)
}
