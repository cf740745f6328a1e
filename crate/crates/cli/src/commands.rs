use std::fs;

use ncoadj::data::{apply_transform, Transform, TransformKind};
use ncoadj::estimators::{fit_estimator, AdjustmentSpec, Estimand};
use ncoadj::inference::{summarize, Correction};
use ncoadj::randinf::{
    binomial, model_output_test, pretest_gated_estimate, pseudo_outcome_test, randomization_test_sharp, run_gate,
    Epsilon, EpsilonRule, GateBranch, PermutationPlan, PretestConfig, PretestKind, TestStatistic,
};
use ncoadj::sensitivity::sensitivity_curve;
use ncoadj::simulation::{write_records_csv, write_results_csv, GridConfig, TidyRow};
use ncoadj::{load_csv, ColumnRoles, Error, Result, TrialDataset};
use serde::Serialize;

use crate::args::*;
use crate::output::{emit_table, render, Run};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn load(args: &DataArgs, run: &mut Run) -> Result<TrialDataset> {
    let roles = ColumnRoles::new(&args.treatment, &args.outcome)
        .covariates(args.covariates.iter().cloned())
        .ncos(args.ncos.iter().cloned());
    let mut data = load_csv(&args.data, &roles, args.pi.unwrap_or(0.5))?;
    if args.pi.is_none() {
        data = data.with_design_pi(data.pi_hat())?;
    }
    for spec in &args.log10 {
        let (col, off) = spec
            .split_once('=')
            .ok_or_else(|| invalid(format!("--log10 expects COLUMN=OFFSET, got `{spec}`")))?;
        let offset: f64 = off
            .trim()
            .parse()
            .map_err(|_| invalid(format!("bad log10 offset `{off}`")))?;
        data = apply_transform(&data, &Transform::new(TransformKind::Log10Offset(offset), col.trim()))?;
    }
    for (name, col) in data.ncos().names().iter().zip(data.ncos().columns()) {
        if col.iter().all(|v| *v == col[0]) {
            run.warn(format!("NCO `{name}` is constant and cannot be used for adjustment"));
        }
    }
    Ok(data)
}

fn spec_for(adjust: Adjust, data: &TrialDataset, quantile: bool) -> Result<AdjustmentSpec> {
    let covs = data.covariates().names().to_vec();
    let ncos = data.ncos().names().to_vec();
    let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(invalid(format!("--adjust needs {what}"))) };
    Ok(match adjust {
        Adjust::None => AdjustmentSpec::none(),
        Adjust::Cov => {
            need(!covs.is_empty(), "--covariates")?;
            AdjustmentSpec::covariates(covs)
        }
        Adjust::Nco => {
            need(!ncos.is_empty(), "--ncos")?;
            AdjustmentSpec::ncos(ncos).quantile(quantile)
        }
        Adjust::CovNco => {
            need(!covs.is_empty() && !ncos.is_empty(), "--covariates and --ncos")?;
            AdjustmentSpec::ncos(ncos).with_covariates(covs).quantile(quantile)
        }
    })
}

fn plan(args: &PermutationArgs, data: &TrialDataset, run: &mut Run) -> PermutationPlan {
    run.manifest.seeds = vec![args.seed];
    if !args.monte_carlo && binomial(data.n(), data.n_treated()) <= args.exhaustive_cap as u128 {
        PermutationPlan::exhaustive().with_cap(args.exhaustive_cap)
    } else {
        PermutationPlan::monte_carlo(args.draws, args.seed).with_cap(args.exhaustive_cap)
    }
}

fn margin(args: &MarginArgs) -> Result<Epsilon> {
    match (args.epsilon, &args.epsilon_rule) {
        (Some(_), Some(_)) => Err(invalid("give either --epsilon or --epsilon-rule, not both")),
        (Some(e), None) => Ok(Epsilon::Fixed(e)),
        (None, Some(rule)) => {
            let (kind, f) = rule
                .split_once(':')
                .ok_or_else(|| invalid(format!("--epsilon-rule expects sd:F or range:F, got `{rule}`")))?;
            let f: f64 = f.parse().map_err(|_| invalid(format!("bad fraction `{f}`")))?;
            match kind {
                "sd" => Ok(Epsilon::Rule(EpsilonRule::FractionOfSd(f))),
                "range" => Ok(Epsilon::Rule(EpsilonRule::FractionOfRange(f))),
                other => Err(invalid(format!("unknown epsilon rule `{other}`"))),
            }
        }
        (None, None) => Err(invalid("the equivalence pretest needs --epsilon or --epsilon-rule")),
    }
}

fn pretest_kind(kind: PretestKindArg, m: &MarginArgs) -> Result<PretestKind> {
    Ok(match kind {
        PretestKindArg::Sharp => PretestKind::Sharp,
        PretestKindArg::Equiv => PretestKind::Equivalence(margin(m)?),
    })
}

#[derive(Serialize)]
struct EstimateRow {
    estimator: String,
    estimand: Estimand,
    correction: Correction,
    estimate: f64,
    ci_low: f64,
    ci_high: f64,
    variance: f64,
    relative_efficiency: f64,
    wald_p: f64,
    gate: Option<&'static str>,
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let mut run = Run::new("estimate", args);
    let data = load(&args.data, &mut run)?;
    let correction: Correction = args.correction.parse()?;
    let estimand = if args.sate { Estimand::Sate } else { Estimand::Ate };
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(invalid(format!("--level {} must lie in (0, 1)", args.level)));
    }

    let mut adjust = args.adjust.clone();
    if adjust.is_empty() {
        adjust.push(Adjust::None);
        let (c, n) = (!data.covariates().is_empty(), !data.ncos().is_empty());
        if c {
            adjust.push(Adjust::Cov);
        }
        if n {
            adjust.push(Adjust::Nco);
        }
        if c && n {
            adjust.push(Adjust::CovNco);
        }
    }

    let plug_fit = fit_estimator(&data, &AdjustmentSpec::none(), estimand)?;
    let plug = summarize(&plug_fit, data.treatment(), data.outcome(), &AdjustmentSpec::none(), correction, args.level)?;
    let row = |label: String, r: &ncoadj::EstimateResult, gate| EstimateRow {
        estimator: label,
        estimand: r.estimand,
        correction: r.correction,
        estimate: r.estimate,
        ci_low: r.ci_low,
        ci_high: r.ci_high,
        variance: r.variance,
        relative_efficiency: r.variance / plug.variance,
        wald_p: r.wald_p,
        gate,
    };

    let mut rows = Vec::new();
    let mut gates = Vec::new();
    for a in adjust {
        let spec = spec_for(a, &data, args.quantile_nco)?;
        let fit = fit_estimator(&data, &spec, estimand)?;
        let res = summarize(&fit, data.treatment(), data.outcome(), &spec, correction, args.level)?;
        rows.push(row(spec.label(), &res, None));
    }
    if let Some(kind) = args.pretest {
        let config = PretestConfig {
            kind: pretest_kind(kind, &args.margin)?,
            alpha: args.alpha,
            statistic: TestStatistic::DiffMeans,
            plan: plan(&args.perm, &data, &mut run),
        };
        for a in args.adjust.iter().copied().chain([Adjust::Nco, Adjust::CovNco]) {
            let Ok(spec) = spec_for(a, &data, args.quantile_nco) else { continue };
            if spec.nco_columns.is_empty() || gates.iter().any(|(s, _): &(AdjustmentSpec, _)| *s == spec) {
                continue;
            }
            let g = pretest_gated_estimate(&data, &spec, &config, estimand, correction, args.level)?;
            let label = format!("{}-gated({})", kind_label(kind), spec.label());
            let branch = match g.decision.branch {
                GateBranch::NcoAdjusted => "adjusted",
                GateBranch::Unadjusted => "unadjusted",
            };
            rows.push(row(label, &g.result, Some(branch)));
            gates.push((spec, g.decision));
        }
        run.note("gate_decisions", gates.iter().map(|(_, d)| d).collect::<Vec<_>>());
    }
    emit_table(&rows, args.output.json, args.output.out.as_deref(), "estimates")?;
    run.finish(args.output.out.as_deref())
}

fn kind_label(k: PretestKindArg) -> &'static str {
    match k {
        PretestKindArg::Sharp => "sharp",
        PretestKindArg::Equiv => "equiv",
    }
}

#[derive(Serialize)]
struct TestRow {
    method: TestMethod,
    column: String,
    statistic: StatisticArg,
    adjustment: String,
    observed: f64,
    p_value: f64,
    n_assignments: usize,
    n_extreme: usize,
    n_infeasible: usize,
    exhaustive: bool,
}

pub fn test(args: &TestArgs) -> Result<()> {
    let mut run = Run::new("test", args);
    let data = load(&args.data, &mut run)?;
    let spec = spec_for(args.adjust, &data, args.quantile_nco)?;
    let plan = plan(&args.perm, &data, &mut run);
    let column = args.column.clone().unwrap_or_else(|| data.outcome_name().to_string());
    let stat = |s: AdjustmentSpec| match args.statistic {
        StatisticArg::DiffMeans => TestStatistic::DiffMeans,
        StatisticArg::RobustT => TestStatistic::RobustT(s),
    };
    let res = match args.method {
        TestMethod::Sharp => randomization_test_sharp(&data, &column, &stat(spec.clone()), &plan)?,
        TestMethod::Pseudo => pseudo_outcome_test(&data, &spec, &stat(AdjustmentSpec::none()), &plan)?,
        TestMethod::Model => model_output_test(&data, &spec, &plan)?,
    };
    if res.n_infeasible > 0 {
        run.warn(format!("{} assignments had infeasible fits and counted as extreme", res.n_infeasible));
    }
    let row = TestRow {
        method: args.method,
        column,
        statistic: if args.method == TestMethod::Model { StatisticArg::RobustT } else { args.statistic },
        adjustment: spec.label(),
        observed: res.observed,
        p_value: res.p_value,
        n_assignments: res.n_assignments,
        n_extreme: res.n_extreme,
        n_infeasible: res.n_infeasible,
        exhaustive: res.exhaustive,
    };
    emit_table(&[row], args.output.json, args.output.out.as_deref(), "test")?;
    run.finish(args.output.out.as_deref())
}

#[derive(Serialize)]
struct PretestRow {
    nco: String,
    pretest: PretestKindArg,
    p_sharp: Option<f64>,
    epsilon: Option<f64>,
    p_lower: Option<f64>,
    p_upper: Option<f64>,
    alpha: f64,
    recommendation: &'static str,
}

pub fn pretest(args: &PretestArgs) -> Result<()> {
    let mut run = Run::new("pretest", args);
    let data = load(&args.data, &mut run)?;
    let ncos: Vec<String> = match &args.nco {
        Some(n) => vec![n.clone()],
        None => data.ncos().names().to_vec(),
    };
    if ncos.is_empty() {
        return Err(invalid("pretest needs --ncos"));
    }
    let covs = data.covariates().names().to_vec();
    let config = PretestConfig {
        kind: pretest_kind(args.pretest, &args.margin)?,
        alpha: args.alpha,
        statistic: match args.statistic {
            StatisticArg::DiffMeans => TestStatistic::DiffMeans,
            StatisticArg::RobustT => TestStatistic::RobustT(AdjustmentSpec::covariates(covs)),
        },
        plan: plan(&args.perm, &data, &mut run),
    };
    let decision = run_gate(&data, &AdjustmentSpec::ncos(ncos), &config)?;
    let rows: Vec<PretestRow> = decision
        .pretests
        .iter()
        .map(|p| PretestRow {
            nco: p.column.clone(),
            pretest: args.pretest,
            p_sharp: p.p_sharp,
            epsilon: p.equivalence.as_ref().map(|e| e.epsilon),
            p_lower: p.equivalence.as_ref().map(|e| e.p_lower),
            p_upper: p.equivalence.as_ref().map(|e| e.p_upper),
            alpha: args.alpha,
            recommendation: if p.passes { "adjust" } else { "do-not-adjust" },
        })
        .collect();
    run.note(
        "gate",
        match decision.branch {
            GateBranch::NcoAdjusted => "adjust for the NCOs",
            GateBranch::Unadjusted => "do not adjust for the NCOs",
        },
    );
    emit_table(&rows, args.output.json, args.output.out.as_deref(), "pretest")?;
    run.finish(args.output.out.as_deref())
}

pub fn sensitivity(args: &SensitivityArgs) -> Result<()> {
    let mut run = Run::new("sensitivity", args);
    let data = load(&args.data, &mut run)?;
    let nco = match (&args.nco, data.ncos().names()) {
        (Some(n), _) => n.clone(),
        (None, [only]) => only.clone(),
        (None, _) => return Err(invalid("give --nco when there is not exactly one NCO")),
    };
    let spec = AdjustmentSpec::ncos([nco]).with_covariates(data.covariates().names().to_vec());
    let correction: Correction = args.correction.parse()?;
    let curve = sensitivity_curve(&data, &spec, &args.delta_grid, correction, args.level)?;
    run.note("gamma_hat", curve.gamma_hat);
    run.note("uncorrected_estimate", curve.base.estimate);
    run.note("approximate", "intervals ignore the sampling error of gamma_hat");
    emit_table(&curve.grid, args.output.json, args.output.out.as_deref(), "sensitivity")?;
    run.finish(args.output.out.as_deref())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut run = Run::new("simulate", args);
    let config = GridConfig::load(&args.config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(invalid("--threads must be positive"));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| invalid(e.to_string()))?;
    let summaries = pool.install(|| config.run())?;

    fs::create_dir_all(&args.out)?;
    let mut buf = Vec::new();
    write_results_csv(&summaries, &mut buf)?;
    fs::write(args.out.join("results.csv"), buf)?;
    let mut buf = Vec::new();
    write_records_csv(&summaries, &mut buf)?;
    fs::write(args.out.join("records.csv"), buf)?;
    if args.json {
        let rows: Vec<TidyRow> = summaries
            .iter()
            .enumerate()
            .flat_map(|(k, s)| ncoadj::simulation::tidy_rows(k, s))
            .collect();
        fs::write(args.out.join("results.json"), render(&rows, true)?)?;
    }

    run.manifest.seeds = std::iter::once(config.seed).chain(summaries.iter().map(|s| s.params.seed)).collect();
    for s in &summaries {
        for w in &s.warnings {
            run.warn(format!("n={} link={}: {w}", s.params.n, s.params.link));
        }
    }
    run.note("config", &config);
    run.note("assignment_redraws", summaries.iter().map(|s| s.assignment_redraws).collect::<Vec<_>>());
    run.note(
        "relative_abs_bias",
        "mean |estimate - beta| divided by the plug-in estimator's mean |estimate - beta|",
    );
    run.finish(Some(&args.out))
}
