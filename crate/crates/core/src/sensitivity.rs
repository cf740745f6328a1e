//! Linear sensitivity analysis for NCO adjustment when treatment may affect
//! the NCO.
//!
//! Under parallel linear structural models with common NCO slope `γ`, the
//! NCO-adjusted estimator is biased by `−γ·δ` where `δ = E[N(1) − N(0)]`.
//! The corrected estimate is therefore `ψ̂ + γ̂·δ`.

use std::io::Write;

use serde::Serialize;

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::estimators::{AdjustmentSpec, Estimand, EstimateResult};
use crate::inference::{analyze, Correction};
use crate::ols::least_squares;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityPoint {
    pub delta: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityCurve {
    pub nco: String,
    pub gamma_hat: f64,
    /// The uncorrected NCO-adjusted fit the curve is built from.
    pub base: EstimateResult,
    pub grid: Vec<SensitivityPoint>,
    /// Always true: the sampling error of `γ̂` is not propagated into the CIs.
    pub approximate: bool,
}

impl SensitivityCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["delta", "estimate", "ci_low", "ci_high"])?;
        for p in &self.grid {
            w.write_record([
                p.delta.to_string(),
                p.estimate.to_string(),
                p.ci_low.to_string(),
                p.ci_high.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Coefficient on `N` in the pooled OLS fit `Y ~ 1 + A + N`.
pub fn fit_gamma(data: &TrialDataset, nco_column: &str) -> Result<f64> {
    let nco = data
        .ncos()
        .get(nco_column)
        .ok_or_else(|| Error::UnknownColumn(nco_column.to_string()))?;
    let a: Vec<f64> = data.treatment().iter().map(|&v| v as f64).collect();
    let names = [data.treatment_name().to_string(), nco_column.to_string()];
    let rows: Vec<usize> = (0..data.n()).collect();
    let fit = least_squares(&[&a, nco], &names, data.outcome(), &rows, 2)?;
    Ok(fit.coefficients[2])
}

/// Bias-corrected estimates over a grid of hypothesized NCO effects.
pub fn sensitivity_curve(
    data: &TrialDataset,
    spec: &AdjustmentSpec,
    delta_grid: &[f64],
    correction: Correction,
    level: f64,
) -> Result<SensitivityCurve> {
    if spec.nco_columns.len() != 1 {
        return Err(Error::InvalidParameter(format!(
            "sensitivity analysis needs exactly one NCO, got {}",
            spec.nco_columns.len()
        )));
    }
    if delta_grid.is_empty() {
        return Err(Error::InvalidParameter("delta grid is empty".into()));
    }
    if let Some(d) = delta_grid.iter().find(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta {d} is not finite")));
    }
    let nco = spec.nco_columns[0].clone();
    let gamma_hat = fit_gamma(data, &nco)?;
    let base = analyze(data, spec, Estimand::Ate, correction, level)?;
    let grid = delta_grid
        .iter()
        .map(|&delta| {
            let shift = gamma_hat * delta;
            SensitivityPoint {
                delta,
                estimate: base.estimate + shift,
                ci_low: base.ci_low + shift,
                ci_high: base.ci_high + shift,
            }
        })
        .collect();
    Ok(SensitivityCurve {
        nco,
        gamma_hat,
        base,
        grid,
        approximate: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NamedColumns;

    fn ds(t: Vec<u8>, n: Vec<f64>, y: Vec<f64>) -> TrialDataset {
        TrialDataset::new(t, NamedColumns::empty(), NamedColumns::new(vec!["N".into()], vec![n]).unwrap(), y, 0.5).unwrap()
    }

    #[test]
    fn exact_linear_relation() {
        let n = vec![0.3, 1.0, -2.0, 4.0, 0.5, 1.7, 2.2, -0.4];
        let y = n.iter().map(|v| 2.0 * v).collect();
        let d = ds(vec![1, 0, 1, 0, 1, 0, 1, 0], n, y);
        assert!((fit_gamma(&d, "N").unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn delta_zero_is_uncorrected() {
        let d = ds(
            vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 1],
            vec![0.3, 1.0, -2.0, 4.0, 0.5, 1.7, 2.2, -0.4, 0.9, 3.1],
            vec![1.0, 0.2, -1.0, 3.0, 1.5, 1.1, 2.9, 0.0, 1.4, 2.6],
        );
        let spec = AdjustmentSpec::ncos(["N"]);
        let c = sensitivity_curve(&d, &spec, &[0.0, 1.0, -0.5], Correction::HC3, 0.95).unwrap();
        assert_eq!(c.grid[0].estimate, c.base.estimate);
        assert_eq!(c.grid[0].ci_low, c.base.ci_low);
        let slope = (c.grid[1].estimate - c.grid[2].estimate) / 1.5;
        assert!((slope - c.gamma_hat).abs() < 1e-12);
        let mut out = Vec::new();
        c.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("delta,estimate,ci_low,ci_high\n0,"));
    }

    #[test]
    fn rejects_bad_spec() {
        let d = ds(vec![1, 0, 1, 0, 1, 0], vec![0.3, 1.0, -2.0, 4.0, 0.5, 1.7], vec![1.0, 0.2, -1.0, 3.0, 1.5, 1.1]);
        assert!(sensitivity_curve(&d, &AdjustmentSpec::none(), &[0.0], Correction::HC0, 0.95).is_err());
        assert!(sensitivity_curve(&d, &AdjustmentSpec::ncos(["N"]), &[], Correction::HC0, 0.95).is_err());
    }
}
