//! Day-by-day out-of-sample evaluation of five operating models.
//!
//! For every evaluation day the engine obtains a first-stage decision
//! according to the variant (none, trained-once, re-solved daily, or
//! perfect-information), derives the realized activations from the bid rule,
//! solves the realized-day dispatch with the first stage pinned, and books
//! the money: the spot cost of the day-ahead schedule, reservation and
//! activation revenue, rebound and penalty costs. Cumulative curves and
//! savings percentages against the do-nothing base case come out the other
//! end.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{decompose_with, AdmmConfig};
use crate::error::{Error, Result};
use crate::loadshift::{build_load_shift_hours, solve_load_shift, ShiftPlan};
use crate::milp::solver::{SolveOptions, SolverBackend};
use crate::milp::{
    activation_condition, build_stochastic_mfrr_with, default_price_big_m, solve as solve_mfrr,
    FirstStageDecision, PolicyBounds, SecondStageDispatch, MWH_PER_KWH,
};
use crate::prices::{format_float, FreezerSpec, PriceDay};
use crate::scenario::{generate_historical, generate_lookback, ScenarioSet};
use crate::thermal::{ExogenousDay, ThermalParams, ThermalState, DEFAULT_SETPOINT};

/// The five operating models compared by the backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelVariant {
    /// Buy the baseline at spot, do nothing else.
    BaseCost,
    /// Shift consumption against realized spot prices.
    LoadShifting,
    /// One reserve policy trained by consensus ADMM on the training history,
    /// reused unchanged for every evaluation day.
    MfrrHistorical {
        #[serde(default = "default_n_scenarios")]
        n_scenarios: usize,
    },
    /// A fresh policy every day from the most recent `k` days.
    MfrrLookback {
        #[serde(default = "default_lookback_k")]
        k: usize,
    },
    /// Perfect knowledge of the realized spot and balancing prices.
    MfrrOracle,
}

fn default_n_scenarios() -> usize {
    50
}

fn default_lookback_k() -> usize {
    5
}

impl ModelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::BaseCost => "base_cost",
            ModelVariant::LoadShifting => "load_shifting",
            ModelVariant::MfrrHistorical { .. } => "mfrr_historical",
            ModelVariant::MfrrLookback { .. } => "mfrr_lookback",
            ModelVariant::MfrrOracle => "mfrr_oracle",
        }
    }

    pub fn all_five() -> Vec<ModelVariant> {
        vec![
            ModelVariant::BaseCost,
            ModelVariant::LoadShifting,
            ModelVariant::MfrrHistorical {
                n_scenarios: default_n_scenarios(),
            },
            ModelVariant::MfrrLookback { k: default_lookback_k() },
            ModelVariant::MfrrOracle,
        ]
    }
}

/// One day's money under one variant.
#[derive(Debug, Clone, Serialize)]
pub struct DailyResult {
    pub date: NaiveDate,
    pub variant: String,
    /// Spot cost of the day-ahead schedule (the baseline for reserve
    /// variants, the shifted profile for load shifting).
    pub energy_cost: f64,
    pub reservation_revenue: f64,
    pub activation_revenue: f64,
    pub rebound_cost: f64,
    pub penalty_cost: f64,
    pub net_cost: f64,
    #[serde(skip)]
    pub dispatch: Option<SecondStageDispatch>,
    #[serde(skip)]
    pub plan: Option<ShiftPlan>,
    #[serde(skip)]
    pub decision: Option<FirstStageDecision>,
}

impl DailyResult {
    fn costs_only(date: NaiveDate, variant: &str, energy_cost: f64) -> Self {
        DailyResult {
            date,
            variant: variant.to_string(),
            energy_cost,
            reservation_revenue: 0.0,
            activation_revenue: 0.0,
            rebound_cost: 0.0,
            penalty_cost: 0.0,
            net_cost: energy_cost,
            dispatch: None,
            plan: None,
            decision: None,
        }
    }
}

/// Backtest controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Evaluation window (inclusive); `None` means the full dataset.
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    #[serde(default)]
    pub seed: u64,
    /// Penalty price override; when absent, 1.5x the maximum balancing price
    /// of the evaluation window is used.
    #[serde(default)]
    pub lambda_penalty: Option<f64>,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub admm: AdmmConfig,
    #[serde(default)]
    pub policy: PolicyBounds,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            start: None,
            end: None,
            seed: 0,
            lambda_penalty: None,
            solve: SolveOptions {
                mip_gap: 1e-4,
                ..SolveOptions::default()
            },
            admm: AdmmConfig::default(),
            policy: PolicyBounds::default(),
        }
    }
}

/// Everything `evaluate_day` needs besides the day itself.
pub struct EvalContext<'a> {
    pub spec: &'a FreezerSpec,
    pub params: &'a ThermalParams,
    pub exo: &'a ExogenousDay,
    pub policy: &'a PolicyBounds,
    pub solve: &'a SolveOptions,
    pub backend: &'a dyn SolverBackend,
    /// Trained decision for the historical variant.
    pub historical_policy: Option<&'a FirstStageDecision>,
    pub init: ThermalState,
}

/// `sum_h lambda_h * p_h` in currency (prices per MWh, powers kW over 1 h).
pub fn energy_cost(lambda: &[f64], p: &[f64]) -> f64 {
    lambda.iter().zip(p).map(|(l, p)| l * p * MWH_PER_KWH).sum()
}

/// Default penalty price: strictly above anything the balancing market paid
/// in the evaluation window, so non-delivery is never attractive.
pub fn default_lambda_penalty(eval_days: &[PriceDay]) -> f64 {
    let max_b = eval_days
        .iter()
        .flat_map(|d| d.lambda_b.iter())
        .cloned()
        .fold(0.0_f64, f64::max);
    1.5 * max_b
}

/// Evaluates one variant on one realized day. `history` must end strictly
/// before `date`.
pub fn evaluate_day(
    variant: &ModelVariant,
    date: NaiveDate,
    history: &[PriceDay],
    realized: &PriceDay,
    ctx: &EvalContext<'_>,
) -> Result<DailyResult> {
    if realized.date != date {
        return Err(Error::invalid("realized day does not match the date"));
    }
    if history.iter().any(|d| d.date >= date) {
        return Err(Error::invalid("history must lie strictly before the evaluation date"));
    }
    let base_energy = energy_cost(&realized.lambda_s, &ctx.spec.p_base);

    match variant {
        ModelVariant::BaseCost => Ok(DailyResult::costs_only(date, variant.name(), base_energy)),

        ModelVariant::LoadShifting => {
            let ls = build_load_shift_hours(ctx.spec, ctx.params, ctx.exo, &realized.lambda_s, ctx.init)?;
            let plan = solve_load_shift(&ls, ctx.backend, ctx.solve)?;
            let mut r = DailyResult::costs_only(date, variant.name(), energy_cost(&realized.lambda_s, &plan.p));
            r.plan = Some(plan);
            Ok(r)
        }

        ModelVariant::MfrrOracle => {
            let scen = ScenarioSet::from_realized(realized);
            let big_m = default_price_big_m(&scen, ctx.policy);
            let model = build_stochastic_mfrr_with(
                ctx.spec, ctx.params, ctx.exo, &scen, big_m, ctx.policy, ctx.init,
            )?;
            let sol = solve_mfrr(&model, ctx.backend, ctx.solve)?;
            let dispatch = sol.dispatch.into_iter().next().expect("one scenario");
            Ok(book_reserve_day(date, variant.name(), base_energy, realized, ctx.spec, sol.first_stage, dispatch))
        }

        ModelVariant::MfrrHistorical { .. } => {
            let decision = ctx
                .historical_policy
                .ok_or_else(|| Error::invalid("historical variant needs a trained policy"))?;
            dispatch_fixed_policy(date, variant.name(), decision.clone(), realized, ctx, base_energy)
        }

        ModelVariant::MfrrLookback { k } => {
            let scen = generate_lookback(history, date, *k)?.with_lambda_r(realized.lambda_r.clone())?;
            let big_m = default_price_big_m(&scen, ctx.policy);
            let model = build_stochastic_mfrr_with(
                ctx.spec, ctx.params, ctx.exo, &scen, big_m, ctx.policy, ctx.init,
            )?;
            let sol = solve_mfrr(&model, ctx.backend, ctx.solve)?;
            dispatch_fixed_policy(date, variant.name(), sol.first_stage, realized, ctx, base_energy)
        }
    }
}

/// Realized-day settlement of a fixed first stage: bids from the policy,
/// activations from the rule, dispatch from the pinned model.
fn dispatch_fixed_policy(
    date: NaiveDate,
    variant: &str,
    decision: FirstStageDecision,
    realized: &PriceDay,
    ctx: &EvalContext<'_>,
    base_energy: f64,
) -> Result<DailyResult> {
    let bids = decision.bids(&realized.lambda_s);
    let g: Vec<bool> = (0..realized.lambda_s.len())
        .map(|h| activation_condition(bids[h], realized.lambda_b[h], realized.lambda_s[h]))
        .collect();

    let scen = ScenarioSet::from_realized(realized);
    let big_m = default_price_big_m(&scen, ctx.policy);
    let mut model =
        build_stochastic_mfrr_with(ctx.spec, ctx.params, ctx.exo, &scen, big_m, ctx.policy, ctx.init)?;
    model.fix_first_stage(&decision)?;
    model.fix_activation(std::slice::from_ref(&g))?;
    let sol = solve_mfrr(&model, ctx.backend, ctx.solve)?;
    let dispatch = sol.dispatch.into_iter().next().expect("one scenario");
    Ok(book_reserve_day(date, variant, base_energy, realized, ctx.spec, decision, dispatch))
}

fn book_reserve_day(
    date: NaiveDate,
    variant: &str,
    base_energy: f64,
    realized: &PriceDay,
    spec: &FreezerSpec,
    decision: FirstStageDecision,
    dispatch: SecondStageDispatch,
) -> DailyResult {
    let reservation_revenue = energy_cost(&realized.lambda_r, &decision.p_reserve);
    let activation_revenue = energy_cost(&realized.lambda_b, &dispatch.p_up);
    let rebound_cost = energy_cost(&realized.lambda_b, &dispatch.p_dn);
    let penalty_cost: f64 = dispatch.slack.iter().map(|s| spec.lambda_penalty * s * MWH_PER_KWH).sum();
    DailyResult {
        date,
        variant: variant.to_string(),
        energy_cost: base_energy,
        reservation_revenue,
        activation_revenue,
        rebound_cost,
        penalty_cost,
        net_cost: base_energy - reservation_revenue - activation_revenue + rebound_cost + penalty_cost,
        dispatch: Some(dispatch),
        plan: None,
        decision: Some(decision),
    }
}

/// One variant's series over the evaluation window.
#[derive(Debug, Clone)]
pub struct VariantSeries {
    pub variant: String,
    pub days: Vec<DailyResult>,
    /// Prefix sums of `net_cost` over the successful days.
    pub cumulative: Vec<f64>,
    pub failed: Vec<(NaiveDate, String)>,
}

impl VariantSeries {
    pub fn total_net_cost(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub variants: Vec<VariantSeries>,
    /// (variant, percentage saving of the cumulative net cost vs base_cost).
    pub savings_pct: Vec<(String, f64)>,
    pub n_failed: usize,
    pub seed: u64,
    /// The penalty price the run resolved to.
    pub lambda_penalty: f64,
    /// Trained policy of the historical variant, when that variant ran.
    pub historical_policy: Option<FirstStageDecision>,
}

/// Training + evaluation datasets (e.g. one year each).
#[derive(Debug, Clone)]
pub struct BacktestDataset {
    pub train: Vec<PriceDay>,
    pub eval: Vec<PriceDay>,
}

/// Trains the fixed policy for the historical variant: scenario set from the
/// training history, consensus ADMM, decision from the consensus.
pub fn train_historical_policy(
    train: &[PriceDay],
    n_scenarios: usize,
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    config: &BacktestConfig,
    backend: &dyn SolverBackend,
) -> Result<(FirstStageDecision, crate::admm::AdmmDiagnostics)> {
    let scen = generate_historical(train, n_scenarios, config.seed)?;
    let big_m = default_price_big_m(&scen, &config.policy);
    let dec = decompose_with(
        spec,
        params,
        exo,
        &scen,
        big_m,
        &config.policy,
        ThermalState::uniform(DEFAULT_SETPOINT),
    )?;
    let mut admm = config.admm.clone();
    admm.rng_seed = config.seed;
    dec.run(&admm, backend)
}

/// Replays the evaluation window for every requested variant.
pub fn run_backtest(
    variants: &[ModelVariant],
    dataset: &BacktestDataset,
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    config: &BacktestConfig,
    backend: &dyn SolverBackend,
) -> Result<BacktestReport> {
    let mut eval: Vec<&PriceDay> = dataset
        .eval
        .iter()
        .filter(|d| config.start.is_none_or(|s| d.date >= s) && config.end.is_none_or(|e| d.date <= e))
        .collect();
    eval.sort_by_key(|d| d.date);
    if eval.is_empty() {
        return Err(Error::invalid("evaluation window contains no days"));
    }

    let lambda_penalty = config
        .lambda_penalty
        .unwrap_or_else(|| default_lambda_penalty(&dataset.eval));
    let mut spec = spec.clone();
    spec.lambda_penalty = lambda_penalty;
    spec.validate()?;

    // Train the fixed policy once if any historical variant is requested.
    let mut historical_policy = None;
    if let Some(ModelVariant::MfrrHistorical { n_scenarios }) = variants
        .iter()
        .find(|v| matches!(v, ModelVariant::MfrrHistorical { .. }))
    {
        if dataset.train.is_empty() {
            return Err(Error::invalid("historical variant needs a non-empty training dataset"));
        }
        let (decision, _diag) =
            train_historical_policy(&dataset.train, *n_scenarios, &spec, params, exo, config, backend)?;
        historical_policy = Some(decision);
    }

    let ctx = EvalContext {
        spec: &spec,
        params,
        exo,
        policy: &config.policy,
        solve: &config.solve,
        backend,
        historical_policy: historical_policy.as_ref(),
        init: ThermalState::uniform(DEFAULT_SETPOINT),
    };

    // Days are independent once the first stage source is fixed.
    let day_results: Vec<Vec<(NaiveDate, Result<DailyResult>)>> = eval
        .par_iter()
        .map(|day| {
            let history: Vec<PriceDay> = dataset
                .train
                .iter()
                .chain(dataset.eval.iter())
                .filter(|d| d.date < day.date)
                .cloned()
                .collect();
            variants
                .iter()
                .map(|v| (day.date, evaluate_day(v, day.date, &history, day, &ctx)))
                .collect()
        })
        .collect();

    let mut series: Vec<VariantSeries> = variants
        .iter()
        .map(|v| VariantSeries {
            variant: v.name().to_string(),
            days: Vec::new(),
            cumulative: Vec::new(),
            failed: Vec::new(),
        })
        .collect();
    for per_day in day_results {
        for (i, (date, result)) in per_day.into_iter().enumerate() {
            match result {
                Ok(r) => {
                    let prev = series[i].cumulative.last().copied().unwrap_or(0.0);
                    series[i].cumulative.push(prev + r.net_cost);
                    series[i].days.push(r);
                }
                Err(e) => series[i].failed.push((date, e.to_string())),
            }
        }
    }

    // Base cumulative cost for percentages, evaluated on the same days a
    // variant actually completed (so failed days do not skew the ratio).
    let savings_pct = series
        .iter()
        .map(|s| {
            let base_total: f64 = s
                .days
                .iter()
                .map(|d| energy_cost(&eval.iter().find(|e| e.date == d.date).unwrap().lambda_s, &spec.p_base))
                .sum();
            let pct = if base_total.abs() > 0.0 {
                100.0 * (1.0 - s.total_net_cost() / base_total)
            } else {
                0.0
            };
            (s.variant.clone(), pct)
        })
        .collect();

    let n_failed = series.iter().map(|s| s.failed.len()).sum();
    Ok(BacktestReport {
        variants: series,
        savings_pct,
        n_failed,
        seed: config.seed,
        lambda_penalty,
        historical_policy,
    })
}

/// One row of the scenario-count sensitivity sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub count: usize,
    /// Expected training cost per day under the trained policy: expected spot
    /// cost of the baseline minus the expected flexibility value, in-sample.
    pub in_sample_cost_per_day: f64,
    /// Mean realized net cost per day over the evaluation window.
    pub oos_cost_per_day: f64,
    pub converged: bool,
}

/// Trains one policy per scenario count and backtests each on the evaluation
/// window with the historical variant.
pub fn scenario_sweep(
    counts: &[usize],
    dataset: &BacktestDataset,
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    config: &BacktestConfig,
    backend: &dyn SolverBackend,
) -> Result<Vec<SweepRow>> {
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::invalid("scenario counts must be at least 1"));
    }
    let lambda_penalty = config
        .lambda_penalty
        .unwrap_or_else(|| default_lambda_penalty(&dataset.eval));
    let mut spec = spec.clone();
    spec.lambda_penalty = lambda_penalty;

    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        let (_decision, diag) =
            train_historical_policy(&dataset.train, count, &spec, params, exo, config, backend)?;
        let scen = generate_historical(&dataset.train, count, config.seed)?;
        let expected_base: f64 = scen
            .scenarios
            .iter()
            .zip(&scen.probabilities)
            .map(|(sc, pi)| pi * energy_cost(&sc.lambda_s, &spec.p_base))
            .sum();
        let in_sample_cost_per_day = expected_base - diag.fixed_objective;

        let mut cfg = config.clone();
        cfg.lambda_penalty = Some(lambda_penalty);
        let report = run_backtest(
            &[ModelVariant::MfrrHistorical { n_scenarios: count }],
            dataset,
            &spec,
            params,
            exo,
            &cfg,
            backend,
        )?;
        let s = &report.variants[0];
        let n_days = s.days.len().max(1);
        rows.push(SweepRow {
            count,
            in_sample_cost_per_day,
            oos_cost_per_day: s.total_net_cost() / n_days as f64,
            converged: diag.converged,
        });
    }
    Ok(rows)
}

/// `date,variant,energy_cost,...,cumulative_net_cost`, one row per
/// variant-day, ordered by variant then date.
pub fn write_report_csv(mut w: impl std::io::Write, report: &BacktestReport) -> Result<()> {
    writeln!(
        w,
        "date,variant,energy_cost,reservation_revenue,activation_revenue,rebound_cost,penalty_cost,net_cost,cumulative_net_cost"
    )
    .map_err(|e| Error::io("<report writer>", e))?;
    for s in &report.variants {
        for (d, cum) in s.days.iter().zip(&s.cumulative) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                d.date,
                d.variant,
                format_float(d.energy_cost),
                format_float(d.reservation_revenue),
                format_float(d.activation_revenue),
                format_float(d.rebound_cost),
                format_float(d.penalty_cost),
                format_float(d.net_cost),
                format_float(*cum),
            )
            .map_err(|e| Error::io("<report writer>", e))?;
        }
    }
    Ok(())
}

/// Per-variant totals: `variant,days,failed_days,total_net_cost,savings_pct_vs_base`.
pub fn write_summary_csv(mut w: impl std::io::Write, report: &BacktestReport) -> Result<()> {
    writeln!(w, "variant,days,failed_days,total_net_cost,savings_pct_vs_base")
        .map_err(|e| Error::io("<summary writer>", e))?;
    for s in &report.variants {
        let pct = report
            .savings_pct
            .iter()
            .find(|(v, _)| v == &s.variant)
            .map(|(_, p)| *p)
            .unwrap_or(0.0);
        writeln!(
            w,
            "{},{},{},{},{}",
            s.variant,
            s.days.len(),
            s.failed.len(),
            format_float(s.total_net_cost()),
            format_float(pct),
        )
        .map_err(|e| Error::io("<summary writer>", e))?;
    }
    Ok(())
}

/// Long-format curve data for plotting: `date,variant,cumulative_net_cost`.
pub fn write_curves_csv(mut w: impl std::io::Write, report: &BacktestReport) -> Result<()> {
    writeln!(w, "date,variant,cumulative_net_cost").map_err(|e| Error::io("<curves writer>", e))?;
    for s in &report.variants {
        for (d, cum) in s.days.iter().zip(&s.cumulative) {
            writeln!(w, "{},{},{}", d.date, s.variant, format_float(*cum))
                .map_err(|e| Error::io("<curves writer>", e))?;
        }
    }
    Ok(())
}

/// `count,in_sample_cost_per_day,oos_cost_per_day,converged`.
pub fn write_sweep_csv(mut w: impl std::io::Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "count,in_sample_cost_per_day,oos_cost_per_day,converged")
        .map_err(|e| Error::io("<sweep writer>", e))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.count,
            format_float(r.in_sample_cost_per_day),
            format_float(r.oos_cost_per_day),
            r.converged,
        )
        .map_err(|e| Error::io("<sweep writer>", e))?;
    }
    Ok(())
}
