//! Replicate loop and metric aggregation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{draw_units, units_to_dataset, ScenarioParams};
use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_estimator, AdjustmentSpec, Estimand};
use crate::inference::{summarize, Correction};
use crate::randinf::{run_gate, Epsilon, GateBranch, PermutationPlan, PretestConfig, PretestKind, TestStatistic};

/// Replicate failures at or above this fraction abort the scenario.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SuiteEstimator {
    #[serde(rename = "plug-in")]
    PlugIn,
    #[serde(rename = "cov")]
    Cov,
    #[serde(rename = "nco")]
    Nco,
    #[serde(rename = "qnco")]
    QuantileNco,
    #[serde(rename = "cov+nco")]
    Full,
    #[serde(rename = "sharp-gated")]
    SharpGated,
    #[serde(rename = "equiv-gated")]
    EquivGated,
}

impl SuiteEstimator {
    pub const ALL: [SuiteEstimator; 7] = [
        SuiteEstimator::PlugIn,
        SuiteEstimator::Cov,
        SuiteEstimator::Nco,
        SuiteEstimator::QuantileNco,
        SuiteEstimator::Full,
        SuiteEstimator::SharpGated,
        SuiteEstimator::EquivGated,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SuiteEstimator::PlugIn => "plug-in",
            SuiteEstimator::Cov => "cov",
            SuiteEstimator::Nco => "nco",
            SuiteEstimator::QuantileNco => "qnco",
            SuiteEstimator::Full => "cov+nco",
            SuiteEstimator::SharpGated => "sharp-gated",
            SuiteEstimator::EquivGated => "equiv-gated",
        }
    }

    /// Adjustment set on the generated columns `X` and `N`. Gated
    /// estimators report the adjustment set used when the gate opens.
    pub fn spec(self) -> AdjustmentSpec {
        match self {
            SuiteEstimator::PlugIn => AdjustmentSpec::none(),
            SuiteEstimator::Cov => AdjustmentSpec::covariates(["X"]),
            SuiteEstimator::Nco | SuiteEstimator::SharpGated | SuiteEstimator::EquivGated => AdjustmentSpec::ncos(["N"]),
            SuiteEstimator::QuantileNco => AdjustmentSpec::ncos(["N"]).quantile(true),
            SuiteEstimator::Full => AdjustmentSpec::ncos(["N"]).with_covariates(["X"]),
        }
    }

    pub fn is_gated(self) -> bool {
        matches!(self, SuiteEstimator::SharpGated | SuiteEstimator::EquivGated)
    }
}

impl fmt::Display for SuiteEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SuiteEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteEstimator::ALL
            .into_iter()
            .find(|e| e.label() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator `{s}`")))
    }
}

/// Settings for the pretest-gated estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSettings {
    pub draws: usize,
    pub alpha: f64,
    /// Equivalence margin; required when `equiv-gated` is in the suite.
    pub epsilon: Option<Epsilon>,
}

impl Default for GateSettings {
    fn default() -> Self {
        Self {
            draws: crate::randinf::DEFAULT_DRAWS,
            alpha: 0.05,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub estimand: Estimand,
    pub level: f64,
    /// Level of the Wald test whose rejection rate is reported.
    pub alpha: f64,
    pub gate: GateSettings,
    /// Keep per-replicate records in the summary.
    pub keep_records: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            estimand: Estimand::Ate,
            level: 0.95,
            alpha: 0.05,
            gate: GateSettings::default(),
            keep_records: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub estimator: SuiteEstimator,
    pub correction: Correction,
    pub estimate: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub wald_p: f64,
    /// Gated estimators only: whether the NCO-adjusted branch was taken.
    pub adjusted: Option<bool>,
    pub error: Option<String>,
}

impl ReplicateRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: SuiteEstimator,
    pub correction: Correction,
    pub n_valid: usize,
    pub n_failed: usize,
    /// `mean(ψ̂ − β)`
    pub mean_error: f64,
    /// `mean|ψ̂ − β|`
    pub mean_abs_error: f64,
    /// `mean|ψ̂ − β|` relative to the plug-in estimator.
    pub relative_abs_bias: f64,
    pub coverage: f64,
    /// Median over replicates of the variance ratio to the plug-in.
    pub median_relative_efficiency: f64,
    /// Wald rejection rate; power when β ≠ 0, type I error when β = 0.
    pub rejection_rate: f64,
    pub adjust_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub params: ScenarioParams,
    pub rows: Vec<EstimatorSummary>,
    pub records: Vec<ReplicateRecord>,
    /// Total rejected treatment draws across replicates.
    pub assignment_redraws: u64,
    pub warnings: Vec<String>,
}

impl SimSummary {
    pub fn row(&self, estimator: SuiteEstimator, correction: Correction) -> Option<&EstimatorSummary> {
        self.rows.iter().find(|r| r.estimator == estimator && r.correction == correction)
    }

    /// Name of the rejection-rate metric for this scenario.
    pub fn rejection_metric(&self) -> &'static str {
        if self.params.beta == 0.0 {
            "type1"
        } else {
            "power"
        }
    }
}

/// Mixes a root seed with an index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every replicate of a scenario and aggregates the metrics. The plug-in
/// estimator is always evaluated since the relative metrics need it.
///
/// Replicates run on the current rayon pool; results are collected in
/// replicate order, so the summary does not depend on the thread count.
pub fn run_scenario(
    params: &ScenarioParams,
    suite: &[SuiteEstimator],
    corrections: &[Correction],
    options: &SimOptions,
) -> Result<SimSummary> {
    params.validate()?;
    if suite.is_empty() || corrections.is_empty() {
        return Err(Error::InvalidParameter("estimator suite and corrections must be non-empty".into()));
    }
    if !(options.level > 0.0 && options.level < 1.0) || !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::InvalidParameter("level and alpha must lie in (0, 1)".into()));
    }
    let mut estimators: Vec<SuiteEstimator> = suite.to_vec();
    estimators.sort();
    estimators.dedup();
    if estimators[0] != SuiteEstimator::PlugIn {
        estimators.insert(0, SuiteEstimator::PlugIn);
    }
    if estimators.contains(&SuiteEstimator::EquivGated) && options.gate.epsilon.is_none() {
        return Err(Error::InvalidParameter("equiv-gated needs an equivalence margin".into()));
    }
    let mut corrections = corrections.to_vec();
    corrections.sort();
    corrections.dedup();

    let per_replicate: Vec<(Vec<ReplicateRecord>, u32)> = (0..params.replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(params, r, &estimators, &corrections, options))
        .collect::<Result<_>>()?;

    let assignment_redraws = per_replicate.iter().map(|(_, d)| *d as u64).sum();
    let records: Vec<ReplicateRecord> = per_replicate.into_iter().flat_map(|(r, _)| r).collect();
    let rows = aggregate(params, &estimators, &corrections, &records, options)?;

    let mut warnings = Vec::new();
    for row in &rows {
        if row.n_failed > 0 {
            warnings.push(format!(
                "{} / {}: {} of {} replicates failed and were excluded",
                row.estimator, row.correction, row.n_failed, params.replicates
            ));
        }
    }
    Ok(SimSummary {
        params: params.clone(),
        rows,
        records: if options.keep_records { records } else { Vec::new() },
        assignment_redraws,
        warnings,
    })
}

fn run_replicate(
    params: &ScenarioParams,
    replicate: u64,
    estimators: &[SuiteEstimator],
    corrections: &[Correction],
    options: &SimOptions,
) -> Result<(Vec<ReplicateRecord>, u32)> {
    let (data, redraws) = units_to_dataset(params, draw_units(params, replicate)?)?;
    let mut out = Vec::with_capacity(estimators.len() * corrections.len());
    for &est in estimators {
        match evaluate(&data, est, corrections, options, derive_seed(params.seed, replicate)) {
            Ok(rows) => out.extend(rows.into_iter().map(|(correction, res, adjusted)| match res {
                Ok(r) => ReplicateRecord {
                    replicate,
                    estimator: est,
                    correction,
                    estimate: r.estimate,
                    variance: r.variance,
                    ci_low: r.ci_low,
                    ci_high: r.ci_high,
                    wald_p: r.wald_p,
                    adjusted,
                    error: None,
                },
                Err(e) => failed_record(replicate, est, correction, adjusted, &e),
            })),
            Err(e) => out.extend(corrections.iter().map(|&c| failed_record(replicate, est, c, None, &e))),
        }
    }
    Ok((out, redraws))
}

type Evaluated = (Correction, Result<crate::estimators::EstimateResult>, Option<bool>);

/// Fits an estimator once and summarizes it under each correction.
fn evaluate(
    data: &TrialDataset,
    est: SuiteEstimator,
    corrections: &[Correction],
    options: &SimOptions,
    gate_seed: u64,
) -> Result<Vec<Evaluated>> {
    let (spec, adjusted) = if est.is_gated() {
        let kind = match est {
            SuiteEstimator::SharpGated => PretestKind::Sharp,
            _ => PretestKind::Equivalence(options.gate.epsilon.expect("checked by run_scenario")),
        };
        let config = PretestConfig {
            kind,
            alpha: options.gate.alpha,
            statistic: TestStatistic::DiffMeans,
            plan: PermutationPlan::auto(data.n(), data.n_treated(), options.gate.draws, gate_seed),
        };
        let decision = run_gate(data, &est.spec(), &config)?;
        match decision.branch {
            GateBranch::NcoAdjusted => (est.spec(), Some(true)),
            GateBranch::Unadjusted => (AdjustmentSpec::none(), Some(false)),
        }
    } else {
        (est.spec(), None)
    };
    let fit = fit_estimator(data, &spec, options.estimand)?;
    Ok(corrections
        .iter()
        .map(|&c| {
            (
                c,
                summarize(&fit, data.treatment(), data.outcome(), &spec, c, options.level),
                adjusted,
            )
        })
        .collect())
}

fn failed_record(
    replicate: u64,
    estimator: SuiteEstimator,
    correction: Correction,
    adjusted: Option<bool>,
    e: &Error,
) -> ReplicateRecord {
    ReplicateRecord {
        replicate,
        estimator,
        correction,
        estimate: f64::NAN,
        variance: f64::NAN,
        ci_low: f64::NAN,
        ci_high: f64::NAN,
        wald_p: f64::NAN,
        adjusted,
        error: Some(e.to_string()),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn aggregate(
    params: &ScenarioParams,
    estimators: &[SuiteEstimator],
    corrections: &[Correction],
    records: &[ReplicateRecord],
    options: &SimOptions,
) -> Result<Vec<EstimatorSummary>> {
    let beta = params.beta;
    let reps = params.replicates;
    let mut rows = Vec::new();
    for &c in corrections {
        let plug: Vec<&ReplicateRecord> = records
            .iter()
            .filter(|r| r.estimator == SuiteEstimator::PlugIn && r.correction == c)
            .collect();
        // Indexed by replicate; records are in replicate order.
        let plug_by_rep: Vec<Option<&ReplicateRecord>> = plug.iter().map(|r| (!r.failed()).then_some(*r)).collect();
        let plug_mae = mean(plug.iter().filter(|r| !r.failed()).map(|r| (r.estimate - beta).abs()));

        for &est in estimators {
            let recs: Vec<&ReplicateRecord> = records.iter().filter(|r| r.estimator == est && r.correction == c).collect();
            let n_failed = recs.iter().filter(|r| r.failed()).count();
            if n_failed as f64 >= MAX_FAILURE_FRACTION * reps as f64 {
                return Err(Error::ExcessiveFailures {
                    estimator: format!("{est} / {c}"),
                    failed: n_failed,
                    total: reps,
                });
            }
            let ok: Vec<&ReplicateRecord> = recs.iter().copied().filter(|r| !r.failed()).collect();
            let mae = mean(ok.iter().map(|r| (r.estimate - beta).abs()));
            let ratios: Vec<f64> = ok
                .iter()
                .filter_map(|r| plug_by_rep[r.replicate as usize].map(|p| r.variance / p.variance))
                .collect();
            let crit = options.alpha;
            rows.push(EstimatorSummary {
                estimator: est,
                correction: c,
                n_valid: ok.len(),
                n_failed,
                mean_error: mean(ok.iter().map(|r| r.estimate - beta)),
                mean_abs_error: mae,
                relative_abs_bias: mae / plug_mae,
                coverage: mean(ok.iter().map(|r| f64::from(u8::from(r.ci_low <= beta && beta <= r.ci_high)))),
                median_relative_efficiency: median(ratios),
                rejection_rate: mean(ok.iter().map(|r| f64::from(u8::from(r.wald_p <= crit)))),
                adjust_rate: est
                    .is_gated()
                    .then(|| mean(ok.iter().map(|r| f64::from(u8::from(r.adjusted == Some(true)))))),
            });
        }
    }
    Ok(rows)
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = it.fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}
