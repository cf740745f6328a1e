//! Randomization inference: sharp-null permutation tests, regression-adjusted
//! variants, NCO pretests, and pretest-gated estimation.
//!
//! Every test re-randomizes treatment while holding the number of treated
//! units fixed. Exhaustive plans enumerate all `C(n, n1)` assignments
//! (including the observed one); Monte Carlo plans draw `B` assignments and
//! report the add-one p-value `(1 + #extreme) / (1 + B)`. Draw `b` uses its
//! own ChaCha stream derived from the plan seed, so a Monte Carlo p-value is
//! a pure function of `(data, B, seed)`.
//!
//! An assignment on which the statistic cannot be computed (for example a
//! rank-deficient arm fit) counts as more extreme than the observed value.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{NamedColumns, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{AdjustmentSpec, Estimand, EstimateResult};
use crate::inference::{analyze, robust_t_raw, Correction};
use crate::ols::least_squares;

pub const DEFAULT_DRAWS: usize = 1000;
pub const MIN_DRAWS: usize = 100;
pub const DEFAULT_EXHAUSTIVE_CAP: u64 = 200_000;

/// Relative tolerance when comparing permuted and observed statistics, so
/// that algebraically tied values are not split by rounding.
const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    Exhaustive,
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub mode: PermutationMode,
    pub exhaustive_cap: u64,
}

impl PermutationPlan {
    pub fn exhaustive() -> Self {
        Self {
            mode: PermutationMode::Exhaustive,
            exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP,
        }
    }

    pub fn monte_carlo(draws: usize, seed: u64) -> Self {
        Self {
            mode: PermutationMode::MonteCarlo { draws, seed },
            exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP,
        }
    }

    /// Exhaustive when `C(n, n1)` fits under the cap, Monte Carlo otherwise.
    pub fn auto(n: usize, n1: usize, draws: usize, seed: u64) -> Self {
        if binomial(n, n1) <= DEFAULT_EXHAUSTIVE_CAP as u128 {
            Self::exhaustive()
        } else {
            Self::monte_carlo(draws, seed)
        }
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.exhaustive_cap = cap;
        self
    }

    fn validate(&self, n: usize, n1: usize) -> Result<()> {
        match self.mode {
            PermutationMode::Exhaustive => {
                let total = binomial(n, n1);
                if total > self.exhaustive_cap as u128 {
                    return Err(Error::PermutationCap {
                        count: total,
                        total,
                        cap: self.exhaustive_cap,
                    });
                }
            }
            PermutationMode::MonteCarlo { draws, .. } => {
                if draws < MIN_DRAWS {
                    return Err(Error::InvalidParameter(format!(
                        "Monte Carlo plans need at least {MIN_DRAWS} draws, got {draws}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Direction in which a permuted statistic counts as extreme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    /// `|T| ≥ |T_obs|`
    TwoSided,
    /// `T ≥ T_obs`
    Greater,
    /// `T ≤ T_obs`
    Less,
}

impl Alternative {
    fn is_extreme(self, t: f64, observed: f64) -> bool {
        let tol = TIE_TOL * observed.abs().max(1.0);
        match self {
            Alternative::TwoSided => t.abs() >= observed.abs() - tol,
            Alternative::Greater => t >= observed - tol,
            Alternative::Less => t <= observed + tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomizationResult {
    pub p_value: f64,
    pub observed: f64,
    /// Assignments evaluated: all of them for exhaustive plans, `B` draws otherwise.
    pub n_assignments: usize,
    pub n_extreme: usize,
    /// Assignments where the statistic failed (counted as extreme).
    pub n_infeasible: usize,
    pub exhaustive: bool,
}

/// Generic randomization test of a statistic of the treatment vector.
pub fn permutation_test<F>(
    treatment: &[u8],
    plan: &PermutationPlan,
    alternative: Alternative,
    statistic: F,
) -> Result<RandomizationResult>
where
    F: Fn(&[u8]) -> Result<f64>,
{
    let n = treatment.len();
    let n1 = treatment.iter().filter(|&&a| a == 1).count();
    plan.validate(n, n1)?;
    let observed = statistic(treatment)?;

    let mut n_extreme = 0usize;
    let mut n_infeasible = 0usize;
    let mut n_assignments = 0usize;
    let mut assignment = vec![0u8; n];
    let mut tally = |assignment: &[u8]| {
        n_assignments += 1;
        match statistic(assignment) {
            Ok(t) if t.is_finite() => {
                if alternative.is_extreme(t, observed) {
                    n_extreme += 1;
                }
            }
            _ => {
                n_infeasible += 1;
                n_extreme += 1;
            }
        }
    };

    let exhaustive = matches!(plan.mode, PermutationMode::Exhaustive);
    match plan.mode {
        PermutationMode::Exhaustive => {
            for treated in (0..n).combinations(n1) {
                assignment.fill(0);
                for i in treated {
                    assignment[i] = 1;
                }
                tally(&assignment);
            }
        }
        PermutationMode::MonteCarlo { draws, seed } => {
            let mut idx: Vec<usize> = (0..n).collect();
            for b in 0..draws {
                draw_assignment(seed, b as u64, n1, &mut idx, &mut assignment);
                tally(&assignment);
            }
        }
    }

    let p_value = if exhaustive {
        n_extreme as f64 / n_assignments as f64
    } else {
        (1 + n_extreme) as f64 / (1 + n_assignments) as f64
    };
    Ok(RandomizationResult {
        p_value,
        observed,
        n_assignments,
        n_extreme,
        n_infeasible,
        exhaustive,
    })
}

/// Draw `b` of a Monte Carlo plan: a uniformly random set of `n1` treated
/// units from stream `b` of the seeded generator.
pub fn draw_assignment(seed: u64, b: u64, n1: usize, idx: &mut [usize], assignment: &mut [u8]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    for (k, v) in idx.iter_mut().enumerate() {
        *v = k;
    }
    let (chosen, _) = idx.partial_shuffle(&mut rng, n1);
    assignment.fill(0);
    for &i in chosen.iter() {
        assignment[i] = 1;
    }
}

/// Statistic used by randomization tests and pretests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatistic {
    DiffMeans,
    /// Lin-adjusted robust t with the given predictors.
    RobustT(AdjustmentSpec),
}

/// Compiled form of a statistic: predictors are materialized once since
/// they do not depend on the assignment.
enum Compiled {
    DiffMeans,
    RobustT(NamedColumns),
}

impl Compiled {
    fn new(statistic: &TestStatistic, data: &TrialDataset, outcome_column: &str) -> Result<Self> {
        match statistic {
            TestStatistic::DiffMeans => Ok(Compiled::DiffMeans),
            TestStatistic::RobustT(spec) => {
                if spec
                    .covariate_columns
                    .iter()
                    .chain(&spec.nco_columns)
                    .any(|c| c == outcome_column)
                {
                    return Err(Error::InvalidParameter(format!(
                        "tested column `{outcome_column}` cannot also be a predictor"
                    )));
                }
                Ok(Compiled::RobustT(spec.predictors(data)?))
            }
        }
    }

    fn eval(&self, assignment: &[u8], y: &[f64]) -> Result<f64> {
        match self {
            Compiled::DiffMeans => diff_means(assignment, y),
            Compiled::RobustT(p) => robust_t_raw(assignment, y, p),
        }
    }
}

fn diff_means(assignment: &[u8], y: &[f64]) -> Result<f64> {
    let (mut s1, mut n1, mut s0) = (0.0, 0usize, 0.0);
    for (&a, &v) in assignment.iter().zip(y) {
        if a == 1 {
            s1 += v;
            n1 += 1;
        } else {
            s0 += v;
        }
    }
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::EmptyArm(if n1 == 0 { 1 } else { 0 }));
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

fn column<'a>(data: &'a TrialDataset, name: &str) -> Result<&'a [f64]> {
    data.column(name).ok_or_else(|| Error::UnknownColumn(name.to_string()))
}

/// Two-sided test of the sharp null of no effect on `outcome_column` (the
/// primary outcome or any covariate/NCO column).
pub fn randomization_test_sharp(
    data: &TrialDataset,
    outcome_column: &str,
    statistic: &TestStatistic,
    plan: &PermutationPlan,
) -> Result<RandomizationResult> {
    let y = column(data, outcome_column)?;
    let stat = Compiled::new(statistic, data, outcome_column)?;
    permutation_test(data.treatment(), plan, Alternative::TwoSided, |a| stat.eval(a, y))
}

/// Pseudo-outcome test: residualize the outcome once on the predictors in
/// `spec` with a pooled OLS fit that ignores treatment, then run a sharp
/// randomization test on the residuals. An empty spec uses the raw outcome.
pub fn pseudo_outcome_test(
    data: &TrialDataset,
    spec: &AdjustmentSpec,
    statistic: &TestStatistic,
    plan: &PermutationPlan,
) -> Result<RandomizationResult> {
    let residuals = pooled_residuals(data, spec)?;
    let stat = Compiled::new(statistic, data, data.outcome_name())?;
    permutation_test(data.treatment(), plan, Alternative::TwoSided, |a| stat.eval(a, &residuals))
}

/// `Y − f(Z)` for the pooled OLS fit `f` on the adjustment set's predictors.
pub fn pooled_residuals(data: &TrialDataset, spec: &AdjustmentSpec) -> Result<Vec<f64>> {
    if spec.is_empty() {
        return Ok(data.outcome().to_vec());
    }
    let predictors = spec.predictors(data)?;
    let cols: Vec<&[f64]> = predictors.columns().iter().map(Vec::as_slice).collect();
    let rows: Vec<usize> = (0..data.n()).collect();
    let fit = least_squares(&cols, predictors.names(), data.outcome(), &rows, 2)?;
    Ok(data.outcome().iter().zip(&fit.fitted).map(|(y, f)| y - f).collect())
}

/// Model-output test: the Lin robust t is recomputed under every assignment
/// with the outcome held fixed.
pub fn model_output_test(
    data: &TrialDataset,
    spec: &AdjustmentSpec,
    plan: &PermutationPlan,
) -> Result<RandomizationResult> {
    randomization_test_sharp(data, data.outcome_name(), &TestStatistic::RobustT(spec.clone()), plan)
}

/// Rule deriving the equivalence margin from the pooled primary outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    /// `f × (max Y − min Y)`
    FractionOfRange(f64),
    /// `f × SD(Y)`, pooled over both arms
    FractionOfSd(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Epsilon {
    Fixed(f64),
    Rule(EpsilonRule),
}

impl Epsilon {
    pub fn resolve(&self, data: &TrialDataset) -> Result<f64> {
        let y = data.outcome();
        let eps = match *self {
            Epsilon::Fixed(e) => e,
            Epsilon::Rule(EpsilonRule::FractionOfRange(f)) => {
                let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                f * (hi - lo)
            }
            Epsilon::Rule(EpsilonRule::FractionOfSd(f)) => {
                let n = y.len() as f64;
                let mean = y.iter().sum::<f64>() / n;
                let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                f * var.sqrt()
            }
        };
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("equivalence margin must be > 0, got {eps}")));
        }
        Ok(eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretestKind {
    Sharp,
    Equivalence(Epsilon),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretestConfig {
    pub kind: PretestKind,
    pub alpha: f64,
    pub statistic: TestStatistic,
    pub plan: PermutationPlan,
}

impl PretestConfig {
    pub fn sharp(plan: PermutationPlan) -> Self {
        Self {
            kind: PretestKind::Sharp,
            alpha: 0.05,
            statistic: TestStatistic::DiffMeans,
            plan,
        }
    }

    pub fn equivalence(epsilon: Epsilon, plan: PermutationPlan) -> Self {
        Self {
            kind: PretestKind::Equivalence(epsilon),
            alpha: 0.05,
            statistic: TestStatistic::DiffMeans,
            plan,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceResult {
    pub epsilon: f64,
    /// Test of `τ_i = −ε` against effects above `−ε`.
    pub p_lower: f64,
    /// Test of `τ_i = +ε` against effects below `+ε`.
    pub p_upper: f64,
    pub reject_equiv_null: bool,
}

/// Two one-sided randomization tests of the bounded nulls `τ_i ≥ ε` and
/// `τ_i ≤ −ε` for the effect of treatment on `nco_column`. Each boundary
/// sharp null is imposed by removing the hypothesized shift from treated
/// units and re-adding it under every permuted assignment.
pub fn equivalence_pretest(
    data: &TrialDataset,
    nco_column: &str,
    epsilon: f64,
    statistic: &TestStatistic,
    plan: &PermutationPlan,
    alpha: f64,
) -> Result<EquivalenceResult> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("equivalence margin must be > 0, got {epsilon}")));
    }
    let observed = column(data, nco_column)?;
    let stat = Compiled::new(statistic, data, nco_column)?;
    let treatment = data.treatment();

    let one_sided = |shift: f64, alternative: Alternative| -> Result<f64> {
        let base: Vec<f64> = observed
            .iter()
            .zip(treatment)
            .map(|(v, &a)| v - shift * a as f64)
            .collect();
        let res = permutation_test(treatment, plan, alternative, |a| {
            let y: Vec<f64> = base.iter().zip(a).map(|(v, &ai)| v + shift * ai as f64).collect();
            stat.eval(a, &y)
        })?;
        Ok(res.p_value)
    };

    let p_upper = one_sided(epsilon, Alternative::Less)?;
    let p_lower = one_sided(-epsilon, Alternative::Greater)?;
    Ok(EquivalenceResult {
        epsilon,
        p_lower,
        p_upper,
        reject_equiv_null: p_lower <= alpha && p_upper <= alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateBranch {
    NcoAdjusted,
    /// The adjustment spec with its NCOs removed (plug-in when no covariates).
    Unadjusted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NcoPretest {
    pub column: String,
    /// Sharp-null p-value, when the sharp pretest was run.
    pub p_sharp: Option<f64>,
    pub equivalence: Option<EquivalenceResult>,
    /// True when this NCO passes the gate.
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateDecision {
    pub kind: PretestKind,
    pub alpha: f64,
    pub pretests: Vec<NcoPretest>,
    pub branch: GateBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatedEstimate {
    pub result: EstimateResult,
    pub decision: GateDecision,
}

/// Runs the configured pretest on every NCO in `spec`. The NCO-adjusted
/// branch is taken only if every NCO passes: a sharp pretest passes when it
/// does not reject, an equivalence pretest passes when it rejects.
pub fn run_gate(data: &TrialDataset, spec: &AdjustmentSpec, config: &PretestConfig) -> Result<GateDecision> {
    config.validate()?;
    if spec.nco_columns.is_empty() {
        return Err(Error::InvalidParameter("pretest gating needs at least one NCO".into()));
    }
    let mut pretests = Vec::with_capacity(spec.nco_columns.len());
    for nco in &spec.nco_columns {
        let entry = match config.kind {
            PretestKind::Sharp => {
                let res = randomization_test_sharp(data, nco, &config.statistic, &config.plan)?;
                NcoPretest {
                    column: nco.clone(),
                    p_sharp: Some(res.p_value),
                    equivalence: None,
                    passes: res.p_value > config.alpha,
                }
            }
            PretestKind::Equivalence(eps) => {
                let epsilon = eps.resolve(data)?;
                let res = equivalence_pretest(data, nco, epsilon, &config.statistic, &config.plan, config.alpha)?;
                NcoPretest {
                    column: nco.clone(),
                    p_sharp: None,
                    passes: res.reject_equiv_null,
                    equivalence: Some(res),
                }
            }
        };
        pretests.push(entry);
    }
    let branch = if pretests.iter().all(|p| p.passes) {
        GateBranch::NcoAdjusted
    } else {
        GateBranch::Unadjusted
    };
    Ok(GateDecision {
        kind: config.kind,
        alpha: config.alpha,
        pretests,
        branch,
    })
}

/// Pretest the NCOs, then estimate with or without them.
pub fn pretest_gated_estimate(
    data: &TrialDataset,
    spec: &AdjustmentSpec,
    config: &PretestConfig,
    estimand: Estimand,
    correction: Correction,
    level: f64,
) -> Result<GatedEstimate> {
    let decision = run_gate(data, spec, config)?;
    let chosen = match decision.branch {
        GateBranch::NcoAdjusted => spec.clone(),
        GateBranch::Unadjusted => AdjustmentSpec {
            nco_columns: Vec::new(),
            quantile_transform_ncos: false,
            ..spec.clone()
        },
    };
    let result = analyze(data, &chosen, estimand, correction, level)?;
    Ok(GatedEstimate { result, decision })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(treatment: Vec<u8>, nco: Vec<f64>, y: Vec<f64>) -> TrialDataset {
        TrialDataset::new(
            treatment,
            NamedColumns::empty(),
            NamedColumns::new(vec!["N".into()], vec![nco]).unwrap(),
            y,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(10, 5), 252);
        assert_eq!(binomial(40, 32), 76_904_685);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn four_unit_enumeration() {
        let d = ds(vec![1, 1, 0, 0], vec![1.0, 2.0, 3.0, 4.0], vec![10.0, 10.0, 0.0, 0.0]);
        let r = randomization_test_sharp(&d, "Y", &TestStatistic::DiffMeans, &PermutationPlan::exhaustive()).unwrap();
        assert_eq!(r.n_assignments, 6);
        assert_eq!(r.n_extreme, 2);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.observed, 10.0);
    }

    #[test]
    fn identical_outcomes_give_p_one() {
        let d = ds(vec![1, 0, 1, 0, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![3.0; 5]);
        let exact = randomization_test_sharp(&d, "Y", &TestStatistic::DiffMeans, &PermutationPlan::exhaustive()).unwrap();
        assert_eq!(exact.p_value, 1.0);
        let mc = randomization_test_sharp(&d, "Y", &TestStatistic::DiffMeans, &PermutationPlan::monte_carlo(200, 3)).unwrap();
        assert_eq!(mc.p_value, 1.0);
    }

    #[test]
    fn plan_validation() {
        let d = ds(vec![1, 0, 1, 0], vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 5.0]);
        assert!(matches!(
            randomization_test_sharp(&d, "Y", &TestStatistic::DiffMeans, &PermutationPlan::monte_carlo(99, 1)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            randomization_test_sharp(&d, "Y", &TestStatistic::DiffMeans, &PermutationPlan::exhaustive().with_cap(5)),
            Err(Error::PermutationCap { .. })
        ));
    }

    #[test]
    fn draws_preserve_treated_count() {
        let mut idx = vec![0; 12];
        let mut a = vec![0u8; 12];
        for b in 0..50 {
            draw_assignment(9, b, 5, &mut idx, &mut a);
            assert_eq!(a.iter().filter(|&&v| v == 1).count(), 5);
        }
    }

    #[test]
    fn infeasible_assignments_count_as_extreme() {
        let t = [1u8, 1, 0, 0, 0];
        let r = permutation_test(&t, &PermutationPlan::exhaustive(), Alternative::TwoSided, |a| {
            if a[0] == 1 && a[1] == 1 {
                Ok(1.0)
            } else {
                Err(Error::ZeroDenominator("x".into()))
            }
        })
        .unwrap();
        assert_eq!(r.n_assignments, 10);
        assert_eq!(r.n_infeasible, 9);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn equivalence_wide_margin_rejects() {
        let t: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let nco: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64 * 0.1).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let d = ds(t, nco, y);
        let r = equivalence_pretest(&d, "N", 50.0, &TestStatistic::DiffMeans, &PermutationPlan::monte_carlo(500, 1), 0.05).unwrap();
        assert!(r.reject_equiv_null);
        assert!(r.p_lower < 0.01 && r.p_upper < 0.01);
        assert!(equivalence_pretest(&d, "N", 0.0, &TestStatistic::DiffMeans, &PermutationPlan::monte_carlo(500, 1), 0.05).is_err());
    }

    #[test]
    fn epsilon_rules() {
        let d = ds(vec![1, 0, 1, 0], vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 2.0, 4.0, 6.0]);
        let r = Epsilon::Rule(EpsilonRule::FractionOfRange(0.5)).resolve(&d).unwrap();
        assert_eq!(r, 3.0);
        // sample SD of 0,2,4,6 is sqrt(20/3)
        let s = Epsilon::Rule(EpsilonRule::FractionOfSd(1.0)).resolve(&d).unwrap();
        assert!((s - (20.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(Epsilon::Fixed(-1.0).resolve(&d).is_err());
    }

    #[test]
    fn constant_nco_gate_surfaces_rank_error() {
        let d = ds(vec![1, 0, 1, 0, 1, 0], vec![2.0; 6], vec![1.0, 2.0, 3.0, 5.0, 4.0, 0.0]);
        let cfg = PretestConfig::sharp(PermutationPlan::exhaustive());
        let gate = run_gate(&d, &AdjustmentSpec::ncos(["N"]), &cfg).unwrap();
        assert_eq!(gate.pretests[0].p_sharp, Some(1.0));
        assert_eq!(gate.branch, GateBranch::NcoAdjusted);
        let err = pretest_gated_estimate(&d, &AdjustmentSpec::ncos(["N"]), &cfg, Estimand::Ate, Correction::HC3, 0.95).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn tested_column_cannot_be_predictor() {
        let d = ds(vec![1, 0, 1, 0], vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 2.0, 4.0, 6.0]);
        let stat = TestStatistic::RobustT(AdjustmentSpec::ncos(["N"]));
        assert!(randomization_test_sharp(&d, "N", &stat, &PermutationPlan::exhaustive()).is_err());
    }
}
