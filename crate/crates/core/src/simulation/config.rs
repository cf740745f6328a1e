//! JSON scenario grids and tidy CSV output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dgp::{Link, ScenarioParams};
use super::runner::{derive_seed, run_scenario, SimOptions, SimSummary, SuiteEstimator};
use crate::error::{Error, Result};
use crate::inference::Correction;

/// Parameter vectors to cross. Omitted fields take the scenario defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridAxes {
    pub n: Vec<usize>,
    pub pi: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_n: Vec<f64>,
    pub rho_yx: Vec<f64>,
    pub rho_yn_given_x: Vec<f64>,
    pub rho_xu: Vec<f64>,
    pub link: Vec<Link>,
}

impl Default for GridAxes {
    fn default() -> Self {
        let d = ScenarioParams::default();
        Self {
            n: vec![d.n],
            pi: vec![d.pi],
            beta: vec![d.beta],
            beta_n: vec![d.beta_n],
            rho_yx: vec![d.rho_yx],
            rho_yn_given_x: vec![d.rho_yn_given_x],
            rho_xu: vec![d.rho_xu],
            link: vec![d.link],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_min_arm")]
    pub min_arm_size: usize,
    #[serde(default)]
    pub grid: GridAxes,
    pub estimators: Vec<SuiteEstimator>,
    pub corrections: Vec<Correction>,
    #[serde(default)]
    pub options: SimOptions,
}

fn default_replicates() -> usize {
    ScenarioParams::default().replicates
}

fn default_min_arm() -> usize {
    ScenarioParams::default().min_arm_size
}

impl GridConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GridConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let empty = [
            ("n", g.n.is_empty()),
            ("pi", g.pi.is_empty()),
            ("beta", g.beta.is_empty()),
            ("beta_n", g.beta_n.is_empty()),
            ("rho_yx", g.rho_yx.is_empty()),
            ("rho_yn_given_x", g.rho_yn_given_x.is_empty()),
            ("rho_xu", g.rho_xu.is_empty()),
            ("link", g.link.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidParameter(format!("grid axis `{name}` is empty")));
        }
        if self.estimators.is_empty() || self.corrections.is_empty() {
            return Err(Error::InvalidParameter("estimators and corrections must be non-empty".into()));
        }
        for s in self.scenarios() {
            s.validate()?;
        }
        Ok(())
    }

    /// Cartesian product of the axes in a fixed order; scenario `k` gets a
    /// seed derived from the root seed and `k`.
    pub fn scenarios(&self) -> Vec<ScenarioParams> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &n in &g.n {
            for &pi in &g.pi {
                for &beta in &g.beta {
                    for &beta_n in &g.beta_n {
                        for &rho_yx in &g.rho_yx {
                            for &rho_yn_given_x in &g.rho_yn_given_x {
                                for &rho_xu in &g.rho_xu {
                                    for &link in &g.link {
                                        let k = out.len() as u64;
                                        out.push(ScenarioParams {
                                            n,
                                            pi,
                                            beta,
                                            beta_n,
                                            rho_yx,
                                            rho_yn_given_x,
                                            rho_xu,
                                            beta0: 1.0,
                                            link,
                                            replicates: self.replicates,
                                            seed: derive_seed(self.seed, k),
                                            min_arm_size: self.min_arm_size,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn run(&self) -> Result<Vec<SimSummary>> {
        self.scenarios()
            .iter()
            .map(|s| run_scenario(s, &self.estimators, &self.corrections, &self.options))
            .collect()
    }
}

/// One metric value in long format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TidyRow {
    pub scenario: usize,
    pub n: usize,
    pub pi: f64,
    pub beta: f64,
    pub beta_n: f64,
    pub rho_yx: f64,
    pub rho_yn_given_x: f64,
    pub rho_xu: f64,
    pub link: Link,
    pub estimator: SuiteEstimator,
    pub correction: Correction,
    pub metric: &'static str,
    pub value: f64,
}

pub fn tidy_rows(scenario: usize, summary: &SimSummary) -> Vec<TidyRow> {
    let p = &summary.params;
    let mut out = Vec::new();
    for r in &summary.rows {
        let mut metrics = vec![
            ("relative_abs_bias", r.relative_abs_bias),
            ("bias", r.mean_error),
            ("mean_abs_error", r.mean_abs_error),
            ("coverage", r.coverage),
            ("median_relative_efficiency", r.median_relative_efficiency),
            (summary.rejection_metric(), r.rejection_rate),
            ("n_valid", r.n_valid as f64),
            ("n_failed", r.n_failed as f64),
        ];
        if let Some(a) = r.adjust_rate {
            metrics.push(("adjust_rate", a));
        }
        for (metric, value) in metrics {
            out.push(TidyRow {
                scenario,
                n: p.n,
                pi: p.pi,
                beta: p.beta,
                beta_n: p.beta_n,
                rho_yx: p.rho_yx,
                rho_yn_given_x: p.rho_yn_given_x,
                rho_xu: p.rho_xu,
                link: p.link,
                estimator: r.estimator,
                correction: r.correction,
                metric,
                value,
            });
        }
    }
    out
}

pub fn write_results_csv<W: Write>(summaries: &[SimSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (k, s) in summaries.iter().enumerate() {
        for row in tidy_rows(k, s) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-replicate records of every scenario.
pub fn write_records_csv<W: Write>(summaries: &[SimSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "scenario",
        "replicate",
        "estimator",
        "correction",
        "estimate",
        "variance",
        "ci_low",
        "ci_high",
        "wald_p",
        "adjusted",
        "error",
    ])?;
    for (k, s) in summaries.iter().enumerate() {
        for r in &s.records {
            w.write_record([
                k.to_string(),
                r.replicate.to_string(),
                r.estimator.to_string(),
                r.correction.to_string(),
                r.estimate.to_string(),
                r.variance.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
                r.wald_p.to_string(),
                r.adjusted.map(|a| a.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
