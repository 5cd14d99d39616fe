//! Two-stage stochastic MILP for mFRR reserve bidding.
//!
//! First stage: hourly reserve capacity `p_reserve` plus the affine bidding
//! policy `(alpha, beta)` that turns realized spot prices into regulating
//! power bids, `bid_h = alpha * (spot_{h+1} - spot_h) + spot_h + beta` (the
//! slope term is dropped in the final hour, where no successor price exists).
//! Second stage, per price scenario: delivered up-regulation, rebound,
//! undelivered slack, freezer temperatures and the regulation state machine.
//! Activation is the rule "bid <= balancing - spot and balancing > spot",
//! encoded exactly with an indicator binary and big-M rows plus a McCormick
//! auxiliary for the product of that binary with the reserve size.
//!
//! Money is accounted in currency units: prices are currency/MWh, powers kW
//! over one-hour blocks, so every price coefficient carries a factor 1e-3.

pub mod ir;
pub mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SolveError};
use crate::prices::FreezerSpec;
use crate::scenario::{PriceScenario, ScenarioSet};
use crate::thermal::{
    baseline_trajectory, ExogenousDay, TemperatureTrajectory, ThermalParams, ThermalState,
    DEFAULT_SETPOINT,
};
use ir::{CmpOp, LinExpr, Model, Sense, VarId};
use solver::{Solution, SolveOptions, SolveStatus, SolverBackend};

/// currency/MWh * kW * 1h -> currency
pub const MWH_PER_KWH: f64 = 1e-3;

/// Big-M used on the rebound-stop temperature rows, degC summed over the
/// steps of one hour. Food temperature deviations stay far below this.
pub const TEMP_BIG_M: f64 = 1e3;

/// Box for the policy variables. The bidding rule itself is unbounded above
/// in principle; a finite box is what makes the activation big-M valid, so
/// these bounds are part of the model configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolicyBounds {
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default = "default_beta_max")]
    pub beta_max: f64,
}

fn default_alpha_max() -> f64 {
    5.0
}

fn default_beta_max() -> f64 {
    2000.0
}

impl Default for PolicyBounds {
    fn default() -> Self {
        PolicyBounds {
            alpha_max: default_alpha_max(),
            beta_max: default_beta_max(),
        }
    }
}

/// Reserve bids and policy coefficients decided before the day starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageDecision {
    /// Reserve capacity bid per hour, kW.
    pub p_reserve: Vec<f64>,
    /// Policy slope on the spot-price differential.
    pub alpha: f64,
    /// Policy intercept, currency/MWh.
    pub beta: f64,
}

impl FirstStageDecision {
    pub fn zero(n_hours: usize) -> Self {
        FirstStageDecision {
            p_reserve: vec![0.0; n_hours],
            alpha: 0.0,
            beta: 0.0,
        }
    }

    pub fn validate(&self, spec: &FreezerSpec) -> Result<()> {
        if self.p_reserve.len() != spec.n_hours() {
            return Err(Error::invalid(format!(
                "p_reserve has {} hours, spec has {}",
                self.p_reserve.len(),
                spec.n_hours()
            )));
        }
        for (h, &r) in self.p_reserve.iter().enumerate() {
            let cap = if spec.is_defrost_hour(h) { 0.0 } else { spec.p_base[h] };
            if !(0.0..=cap + 1e-9).contains(&r) {
                return Err(Error::invalid(format!(
                    "p_reserve[{h}] = {r} outside [0, {cap}]"
                )));
            }
        }
        if self.alpha < 0.0 || self.beta < 0.0 || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::invalid("alpha and beta must be non-negative"));
        }
        Ok(())
    }

    /// Regulating power bids for a realized spot series.
    pub fn bids(&self, lambda_s: &[f64]) -> Vec<f64> {
        bid_prices(self.alpha, self.beta, lambda_s)
    }
}

/// `bid_h = alpha * (spot_{h+1} - spot_h) + spot_h + beta`, slope dropped in
/// the final hour.
pub fn bid_prices(alpha: f64, beta: f64, lambda_s: &[f64]) -> Vec<f64> {
    let n = lambda_s.len();
    (0..n)
        .map(|h| {
            let d = if h + 1 < n { lambda_s[h + 1] - lambda_s[h] } else { 0.0 };
            alpha * d + lambda_s[h] + beta
        })
        .collect()
}

/// The activation rule: bid at or below the balancing-spot gap, in an hour
/// where balancing strictly exceeds spot.
pub fn activation_condition(bid: f64, lambda_b: f64, lambda_s: f64) -> bool {
    lambda_b - lambda_s >= bid && lambda_b > lambda_s
}

/// Per-scenario second-stage values extracted from a solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecondStageDispatch {
    /// Realized consumption per hour, kW.
    pub p: Vec<f64>,
    /// Delivered up-regulation per hour, kW.
    pub p_up: Vec<f64>,
    /// Rebound (down-regulation) per hour, kW.
    pub p_dn: Vec<f64>,
    /// Undelivered reserve per hour, kW.
    pub slack: Vec<f64>,
    /// Regulating power bid per hour under this scenario's spot prices.
    pub lambda_bid: Vec<f64>,
    /// McCormick auxiliary, kW.
    pub phi: Vec<f64>,
    /// Activation indicator per hour.
    pub g: Vec<bool>,
    pub u_up: Vec<bool>,
    pub u_dn: Vec<bool>,
    pub y_up: Vec<bool>,
    pub y_dn: Vec<bool>,
    pub z_up: Vec<bool>,
    pub z_dn: Vec<bool>,
    /// Per-step temperatures under this scenario's dispatch.
    pub t_air: Vec<f64>,
    pub t_food: Vec<f64>,
}

/// Problem dimensions; toy instances use short horizons, production days 24 h.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_hours: usize,
    pub steps_per_hour: usize,
    pub n_steps: usize,
}

impl Dims {
    pub fn hour_of_step(&self, t: usize) -> usize {
        t / self.steps_per_hour
    }

    /// Step indices owned by hour `h`.
    pub fn steps_of_hour(&self, h: usize) -> std::ops::Range<usize> {
        h * self.steps_per_hour..(h + 1) * self.steps_per_hour
    }
}

/// Variable handles of one scenario block. The reserve-specific handles are
/// absent in the load-shifting reduction.
#[derive(Debug, Clone)]
pub struct ScenarioVars {
    pub p: Vec<VarId>,
    pub p_up: Vec<VarId>,
    pub p_dn: Vec<VarId>,
    pub slack: Option<Vec<VarId>>,
    pub phi: Option<Vec<VarId>>,
    pub g: Option<Vec<VarId>>,
    pub u_up: Vec<VarId>,
    pub u_dn: Vec<VarId>,
    pub y_up: Vec<VarId>,
    pub y_dn: Vec<VarId>,
    pub z_up: Vec<VarId>,
    pub z_dn: Vec<VarId>,
    pub t_air: Vec<VarId>,
    pub t_food: Vec<VarId>,
}

/// A built reserve-bidding model plus everything needed to read it back.
#[derive(Debug, Clone)]
pub struct MfrrModel {
    pub model: Model,
    pub dims: Dims,
    pub p_reserve: Vec<VarId>,
    pub alpha: VarId,
    pub beta: VarId,
    pub scenarios: Vec<ScenarioVars>,
    pub probabilities: Vec<f64>,
    pub prices: Vec<PriceScenario>,
    pub lambda_r: Vec<f64>,
    pub lambda_penalty: f64,
    pub baseline: TemperatureTrajectory,
    pub spec: FreezerSpec,
    pub big_m_price: f64,
    first_stage_fixed: bool,
}

/// Spec recipe for the price-row big-M: twice the sum of the largest
/// balancing and spot magnitudes and the largest bid the policy box allows.
pub fn default_price_big_m(scen: &ScenarioSet, bounds: &PolicyBounds) -> f64 {
    let mut max_b: f64 = 0.0;
    let mut max_s: f64 = 0.0;
    let mut max_d: f64 = 0.0;
    for sc in &scen.scenarios {
        for h in 0..sc.lambda_s.len() {
            max_s = max_s.max(sc.lambda_s[h].abs());
            max_b = max_b.max(sc.lambda_b[h].abs());
            if h + 1 < sc.lambda_s.len() {
                max_d = max_d.max((sc.lambda_s[h + 1] - sc.lambda_s[h]).abs());
            }
        }
    }
    let bid_cap = bounds.alpha_max * max_d + max_s + bounds.beta_max;
    2.0 * (max_b + max_s + bid_cap)
}

/// Builds the extensive-form two-stage model over the given scenario set.
pub fn build_stochastic_mfrr(
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    scen: &ScenarioSet,
    big_m: f64,
) -> Result<MfrrModel> {
    build_stochastic_mfrr_with(
        spec,
        params,
        exo,
        scen,
        big_m,
        &PolicyBounds::default(),
        ThermalState::uniform(DEFAULT_SETPOINT),
    )
}

/// As [`build_stochastic_mfrr`] with explicit policy box and initial state.
pub fn build_stochastic_mfrr_with(
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    scen: &ScenarioSet,
    big_m: f64,
    policy: &PolicyBounds,
    init: ThermalState,
) -> Result<MfrrModel> {
    if big_m <= 0.0 || !big_m.is_finite() {
        return Err(Error::invalid(format!("big_m must be positive, got {big_m}")));
    }
    spec.validate()?;
    params.validate_for_horizon()?;
    scen.validate()?;
    let dims = check_dims(spec, params, exo, scen.n_hours())?;
    let baseline = baseline_trajectory(params, exo, &spec.p_base, init)?;

    let mut model = Model::new("mfrr", Sense::Maximize);

    // First stage: reserve capped by the baseline, zero in defrost hours.
    let p_reserve: Vec<VarId> = (0..dims.n_hours)
        .map(|h| {
            let cap = if spec.is_defrost_hour(h) { 0.0 } else { spec.p_base[h] };
            model.add_continuous(format!("p_r_h{h}"), 0.0, cap)
        })
        .collect();
    let alpha = model.add_continuous("alpha", 0.0, policy.alpha_max);
    let beta = model.add_continuous("beta", 0.0, policy.beta_max);

    let mut objective = LinExpr::default();
    for h in 0..dims.n_hours {
        objective.add_term(p_reserve[h], scen.lambda_r[h] * MWH_PER_KWH);
    }

    let mut scenario_vars = Vec::with_capacity(scen.len());
    for (w, sc) in scen.scenarios.iter().enumerate() {
        let pi = scen.probabilities[w];
        let vars = add_scenario_block(
            &mut model,
            &format!("w{w}"),
            spec,
            params,
            exo,
            dims,
            &baseline,
            init,
            Some(ReserveContext {
                p_reserve: &p_reserve,
                alpha,
                beta,
                lambda_s: &sc.lambda_s,
                lambda_b: &sc.lambda_b,
                big_m_price: big_m,
            }),
        );

        for h in 0..dims.n_hours {
            objective.add_term(vars.p_up[h], pi * sc.lambda_b[h] * MWH_PER_KWH);
            objective.add_term(vars.p_dn[h], -pi * sc.lambda_b[h] * MWH_PER_KWH);
            objective.add_term(
                vars.slack.as_ref().unwrap()[h],
                -pi * spec.lambda_penalty * MWH_PER_KWH,
            );
        }
        scenario_vars.push(vars);
    }
    model.set_objective(objective);

    Ok(MfrrModel {
        model,
        dims,
        p_reserve,
        alpha,
        beta,
        scenarios: scenario_vars,
        probabilities: scen.probabilities.clone(),
        prices: scen.scenarios.clone(),
        lambda_r: scen.lambda_r.clone(),
        lambda_penalty: spec.lambda_penalty,
        baseline,
        spec: spec.clone(),
        big_m_price: big_m,
        first_stage_fixed: false,
    })
}

/// Perfect-information benchmark: the stochastic model specialized to the
/// realized day as a single scenario with probability one.
pub fn build_oracle(
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    realized: &crate::prices::PriceDay,
    big_m: f64,
) -> Result<MfrrModel> {
    let scen = ScenarioSet::from_realized(realized);
    build_stochastic_mfrr(spec, params, exo, &scen, big_m)
}

impl MfrrModel {
    pub fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Pins the first-stage variables to a previously made decision.
    pub fn fix_first_stage(&mut self, decision: &FirstStageDecision) -> Result<()> {
        decision.validate(&self.spec)?;
        if decision.p_reserve.len() != self.dims.n_hours {
            return Err(Error::invalid("decision horizon mismatch"));
        }
        for (h, &r) in decision.p_reserve.iter().enumerate() {
            self.model.fix_var(self.p_reserve[h], r);
        }
        self.model.fix_var(self.alpha, decision.alpha);
        self.model.fix_var(self.beta, decision.beta);
        self.first_stage_fixed = true;
        Ok(())
    }

    /// Pins the activation indicators, e.g. to the realized rule outcome.
    pub fn fix_activation(&mut self, g_by_scenario: &[Vec<bool>]) -> Result<()> {
        if g_by_scenario.len() != self.n_scenarios() {
            return Err(Error::invalid("activation fix: scenario count mismatch"));
        }
        for (w, gs) in g_by_scenario.iter().enumerate() {
            if gs.len() != self.dims.n_hours {
                return Err(Error::invalid("activation fix: hour count mismatch"));
            }
            let g_vars = self.scenarios[w]
                .g
                .as_ref()
                .ok_or_else(|| Error::invalid("model has no activation binaries"))?;
            for (h, &on) in gs.iter().enumerate() {
                self.model.fix_var(g_vars[h], if on { 1.0 } else { 0.0 });
            }
        }
        Ok(())
    }

    /// Reads the solved values back into domain terms.
    pub fn extract(&self, sol: &Solution) -> (FirstStageDecision, Vec<SecondStageDispatch>) {
        let decision = FirstStageDecision {
            p_reserve: self.p_reserve.iter().map(|&v| sol.value(v)).collect(),
            alpha: sol.value(self.alpha),
            beta: sol.value(self.beta),
        };
        let dispatch = self
            .scenarios
            .iter()
            .enumerate()
            .map(|(w, vars)| {
                let grab = |ids: &Vec<VarId>| ids.iter().map(|&v| sol.value(v)).collect::<Vec<f64>>();
                let grab_b = |ids: &Vec<VarId>| ids.iter().map(|&v| sol.binary(v)).collect::<Vec<bool>>();
                SecondStageDispatch {
                    p: grab(&vars.p),
                    p_up: grab(&vars.p_up),
                    p_dn: grab(&vars.p_dn),
                    slack: vars.slack.as_ref().map(grab).unwrap_or_default(),
                    lambda_bid: bid_prices(decision.alpha, decision.beta, &self.prices[w].lambda_s),
                    phi: vars.phi.as_ref().map(grab).unwrap_or_default(),
                    g: vars.g.as_ref().map(grab_b).unwrap_or_default(),
                    u_up: grab_b(&vars.u_up),
                    u_dn: grab_b(&vars.u_dn),
                    y_up: grab_b(&vars.y_up),
                    y_dn: grab_b(&vars.y_dn),
                    z_up: grab_b(&vars.z_up),
                    z_dn: grab_b(&vars.z_dn),
                    t_air: grab(&vars.t_air),
                    t_food: grab(&vars.t_food),
                }
            })
            .collect();
        (decision, dispatch)
    }

    fn infeasibility_hint(&self) -> String {
        let mut hint = String::from(
            "terminal food temperature / rebound-stop family; activation shortfall is always \
             covered by the penalty slack",
        );
        if self.first_stage_fixed {
            hint.push_str("; note the first stage is fixed, so an oversized reserve against a \
                           defrost or headroom limit is the usual cause");
        }
        hint
    }
}

/// Result of solving a reserve-bidding model.
#[derive(Debug, Clone)]
pub struct MfrrSolution {
    pub first_stage: FirstStageDecision,
    pub dispatch: Vec<SecondStageDispatch>,
    pub objective: f64,
    pub status: SolveStatus,
    pub gap: Option<f64>,
    /// Full variable vector, kept for invariant audits.
    pub raw: Solution,
}

/// Solves a built model on the given backend.
pub fn solve(
    mfrr: &MfrrModel,
    backend: &dyn SolverBackend,
    opts: &SolveOptions,
) -> Result<MfrrSolution> {
    let sol = backend.solve(&mfrr.model, opts).map_err(|e| match e {
        SolveError::Infeasible { .. } => SolveError::Infeasible {
            hint: mfrr.infeasibility_hint(),
        },
        other => other,
    })?;
    let (first_stage, dispatch) = mfrr.extract(&sol);
    Ok(MfrrSolution {
        first_stage,
        dispatch,
        objective: sol.objective,
        status: sol.status,
        gap: sol.gap,
        raw: sol,
    })
}

/// Writes the model as LP or fixed MPS text.
pub fn export_model(model: &Model, path: impl AsRef<std::path::Path>, format: ExportFormat) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    match format {
        ExportFormat::Lp => model.write_lp(&mut w),
        ExportFormat::Mps => model.write_mps(&mut w),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Lp,
    Mps,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(ExportFormat::Lp),
            "mps" => Ok(ExportFormat::Mps),
            other => Err(Error::invalid(format!("unknown export format `{other}`"))),
        }
    }
}

pub(crate) struct ReserveContext<'a> {
    pub p_reserve: &'a [VarId],
    pub alpha: VarId,
    pub beta: VarId,
    pub lambda_s: &'a [f64],
    pub lambda_b: &'a [f64],
    pub big_m_price: f64,
}

pub(crate) fn check_dims(
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    scen_hours: usize,
) -> Result<Dims> {
    let n_hours = spec.n_hours();
    if scen_hours != n_hours {
        return Err(Error::invalid(format!(
            "scenario horizon has {scen_hours} hours, freezer spec has {n_hours}"
        )));
    }
    let steps_per_hour = params.steps_per_hour();
    let n_steps = n_hours * steps_per_hour;
    if exo.n_steps() != n_steps {
        return Err(Error::invalid(format!(
            "exogenous horizon has {} steps, expected {n_steps}",
            exo.n_steps()
        )));
    }
    exo.validate(n_steps)?;
    Ok(Dims {
        n_hours,
        steps_per_hour,
        n_steps,
    })
}

impl ThermalParams {
    /// Builders accept any horizon; only positivity and step shape matter.
    pub(crate) fn validate_for_horizon(&self) -> Result<()> {
        match self.validate() {
            Ok(()) => Ok(()),
            // Tolerate J*dt != 24 so short test horizons can reuse the type.
            Err(Error::InvalidInput(msg)) if msg.contains("J*dt") => Ok(()),
            Err(e) => Err(e),
        }
    }
}

/// Adds one scenario's dispatch block: consumption split into up/down moves,
/// the regulation state machine, freezer dynamics against the precomputed
/// baseline, the terminal food-temperature cap and the rebound rules. With a
/// [`ReserveContext`] it also adds the reserve delivery logic (slack, phi, g
/// and the bid big-M rows). Returns the variable handles.
#[allow(clippy::too_many_arguments)]
pub(crate) fn add_scenario_block(
    model: &mut Model,
    tag: &str,
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    dims: Dims,
    baseline: &TemperatureTrajectory,
    init: ThermalState,
    reserve: Option<ReserveContext<'_>>,
) -> ScenarioVars {
    let h_range = 0..dims.n_hours;

    let p: Vec<VarId> = h_range
        .clone()
        .map(|h| model.add_continuous(format!("p_{tag}_h{h}"), spec.p_min, spec.p_nom))
        .collect();
    let p_up: Vec<VarId> = h_range
        .clone()
        .map(|h| model.add_continuous(format!("pup_{tag}_h{h}"), 0.0, spec.p_base[h] - spec.p_min))
        .collect();
    let p_dn: Vec<VarId> = h_range
        .clone()
        .map(|h| model.add_continuous(format!("pdn_{tag}_h{h}"), 0.0, spec.p_nom - spec.p_base[h]))
        .collect();
    let u_up: Vec<VarId> = h_range.clone().map(|h| model.add_binary(format!("uup_{tag}_h{h}"))).collect();
    let u_dn: Vec<VarId> = h_range.clone().map(|h| model.add_binary(format!("udn_{tag}_h{h}"))).collect();
    let y_up: Vec<VarId> = h_range.clone().map(|h| model.add_binary(format!("yup_{tag}_h{h}"))).collect();
    let y_dn: Vec<VarId> = h_range.clone().map(|h| model.add_binary(format!("ydn_{tag}_h{h}"))).collect();
    let z_up: Vec<VarId> = h_range.clone().map(|h| model.add_binary(format!("zup_{tag}_h{h}"))).collect();
    let z_dn: Vec<VarId> = h_range.clone().map(|h| model.add_binary(format!("zdn_{tag}_h{h}"))).collect();
    let t_air: Vec<VarId> = (0..dims.n_steps)
        .map(|t| model.add_continuous(format!("tair_{tag}_t{t}"), f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    let t_food: Vec<VarId> = (0..dims.n_steps)
        .map(|t| model.add_continuous(format!("tfood_{tag}_t{t}"), f64::NEG_INFINITY, f64::INFINITY))
        .collect();

    // Initial state.
    model.fix_var(t_air[0], init.t_air);
    model.fix_var(t_food[0], init.t_food);

    // Freezer dynamics; power enters through the hour owning each step.
    let a_f = params.food_gain();
    for t in 0..dims.n_steps - 1 {
        let food = LinExpr::from(t_food[t + 1]) - t_food[t] - a_f * (LinExpr::from(t_air[t]) - t_food[t]);
        model.add_row(format!("dyn_food_{tag}_t{t}"), food, CmpOp::Eq, 0.0);

        let regime = exo.regime_at_step(t, params.dt);
        let k_cf = params.dt / params.c_c / params.r_cf;
        let k_ci = params.dt / params.c_c / params.r_ci(regime);
        let k_p = params.dt / params.c_c * params.eta * exo.od[t];
        let defrost_gain = if exo.defrost[t] { params.eps } else { 0.0 };
        let air = LinExpr::from(t_air[t + 1]) - t_air[t]
            - k_cf * (LinExpr::from(t_food[t]) - t_air[t])
            - k_ci * (LinExpr::constant(exo.t_indoor[t]) - t_air[t])
            + k_p * p[dims.hour_of_step(t)]
            - defrost_gain;
        model.add_row(format!("dyn_air_{tag}_t{t}"), air, CmpOp::Eq, 0.0);
    }

    for h in 0..dims.n_hours {
        // Consumption balance around the baseline.
        model.add_row(
            format!("balance_{tag}_h{h}"),
            LinExpr::from(p[h]) + p_up[h] - p_dn[h],
            CmpOp::Eq,
            spec.p_base[h],
        );
        // Regulation amounts only while the matching state is on.
        model.add_row(
            format!("up_cap_{tag}_h{h}"),
            LinExpr::from(p_up[h]) - (spec.p_base[h] - spec.p_min) * u_up[h],
            CmpOp::Le,
            0.0,
        );
        model.add_row(
            format!("dn_cap_{tag}_h{h}"),
            LinExpr::from(p_dn[h]) - (spec.p_nom - spec.p_base[h]) * u_dn[h],
            CmpOp::Le,
            0.0,
        );
        // Rebound runs at no less than 10% of its capacity.
        model.add_row(
            format!("dn_floor_{tag}_h{h}"),
            LinExpr::from(p_dn[h]) - 0.10 * (spec.p_nom - spec.p_base[h]) * u_dn[h],
            CmpOp::Ge,
            0.0,
        );

        // State machine: y marks a start, z a stop, off before the horizon.
        let up_prev = if h == 0 { LinExpr::default() } else { LinExpr::from(u_up[h - 1]) };
        model.add_row(
            format!("trans_up_{tag}_h{h}"),
            up_prev - u_up[h] + y_up[h] - z_up[h],
            CmpOp::Eq,
            0.0,
        );
        let dn_prev = if h == 0 { LinExpr::default() } else { LinExpr::from(u_dn[h - 1]) };
        model.add_row(
            format!("trans_dn_{tag}_h{h}"),
            dn_prev - u_dn[h] + y_dn[h] - z_dn[h],
            CmpOp::Eq,
            0.0,
        );
        model.add_row(format!("yz_up_{tag}_h{h}"), LinExpr::from(y_up[h]) + z_up[h], CmpOp::Le, 1.0);
        model.add_row(format!("yz_dn_{tag}_h{h}"), LinExpr::from(y_dn[h]) + z_dn[h], CmpOp::Le, 1.0);
        model.add_row(format!("mutex_u_{tag}_h{h}"), LinExpr::from(u_up[h]) + u_dn[h], CmpOp::Le, 1.0);
        model.add_row(format!("mutex_y_{tag}_h{h}"), LinExpr::from(y_up[h]) + y_dn[h], CmpOp::Le, 1.0);
        model.add_row(format!("mutex_z_{tag}_h{h}"), LinExpr::from(z_up[h]) + z_dn[h], CmpOp::Le, 1.0);

        // Rebound starts the hour up-regulation stops.
        model.add_row(
            format!("rebound_follows_{tag}_h{h}"),
            LinExpr::from(y_dn[h]) - z_up[h],
            CmpOp::Ge,
            0.0,
        );

        // Rebound may only stop in an hour where the food temperature is back
        // at its baseline (hour-summed deviation pinned to zero).
        if h >= 1 {
            let mut dev = LinExpr::default();
            let mut base_sum = 0.0;
            for t in dims.steps_of_hour(h) {
                dev.add_term(t_food[t], 1.0);
                base_sum += baseline.t_food[t];
            }
            model.add_row(
                format!("rebound_stop_lo_{tag}_h{h}"),
                dev.clone() - TEMP_BIG_M * z_dn[h],
                CmpOp::Ge,
                base_sum - TEMP_BIG_M,
            );
            model.add_row(
                format!("rebound_stop_hi_{tag}_h{h}"),
                dev + TEMP_BIG_M * z_dn[h],
                CmpOp::Le,
                base_sum + TEMP_BIG_M,
            );
        }

        // No rebound before the first up-regulation.
        let mut ordering = LinExpr::default();
        for k in 0..=h {
            ordering.add_term(y_dn[k], 1.0);
            ordering.add_term(y_up[k], -1.0);
        }
        model.add_row(format!("up_first_{tag}_h{h}"), ordering, CmpOp::Le, 0.0);
    }

    // End the day no warmer than the baseline would.
    model.add_row(
        format!("terminal_food_{tag}"),
        LinExpr::from(t_food[dims.n_steps - 1]),
        CmpOp::Le,
        baseline.t_food[dims.n_steps - 1],
    );

    let (slack, phi, g) = if let Some(ctx) = reserve {
        let slack: Vec<VarId> = (0..dims.n_hours)
            .map(|h| model.add_continuous(format!("s_{tag}_h{h}"), 0.0, spec.p_base[h]))
            .collect();
        let phi: Vec<VarId> = (0..dims.n_hours)
            .map(|h| model.add_continuous(format!("phi_{tag}_h{h}"), 0.0, f64::INFINITY))
            .collect();
        let g: Vec<VarId> = (0..dims.n_hours).map(|h| model.add_binary(format!("g_{tag}_h{h}"))).collect();

        let m_pow = spec.p_nom;
        for h in 0..dims.n_hours {
            let upreg_hour = ctx.lambda_b[h] > ctx.lambda_s[h];
            let gap = ctx.lambda_b[h] - ctx.lambda_s[h];
            let d = if h + 1 < dims.n_hours { ctx.lambda_s[h + 1] - ctx.lambda_s[h] } else { 0.0 };
            let bid = d * ctx.alpha + LinExpr::from(ctx.beta) + ctx.lambda_s[h];

            // g = 1 exactly when the bid is at or below the balancing-spot gap.
            model.add_row(
                format!("bid_lo_{tag}_h{h}"),
                bid.clone() - ctx.big_m_price * (LinExpr::constant(1.0) - g[h]),
                CmpOp::Le,
                gap,
            );
            model.add_row(
                format!("bid_hi_{tag}_h{h}"),
                bid + ctx.big_m_price * g[h],
                CmpOp::Ge,
                gap,
            );

            // Delivery tracks phi only in system up-regulation hours.
            if upreg_hour {
                model.add_row(
                    format!("up_le_phi_{tag}_h{h}"),
                    LinExpr::from(p_up[h]) - phi[h],
                    CmpOp::Le,
                    0.0,
                );
                model.add_row(
                    format!("up_obligation_{tag}_h{h}"),
                    LinExpr::from(p_up[h]) + slack[h] - phi[h],
                    CmpOp::Ge,
                    0.0,
                );
                // Delivery never exceeds the reserve sold.
                model.add_row(
                    format!("up_le_res_{tag}_h{h}"),
                    LinExpr::from(p_up[h]) - ctx.p_reserve[h],
                    CmpOp::Le,
                    0.0,
                );
            } else {
                model.add_row(format!("no_up_{tag}_h{h}"), LinExpr::from(p_up[h]), CmpOp::Le, 0.0);
            }

            // phi = p_reserve when g = 1, phi = 0 when g = 0.
            model.add_row(
                format!("phi_cap_{tag}_h{h}"),
                LinExpr::from(phi[h]) - m_pow * g[h],
                CmpOp::Le,
                0.0,
            );
            model.add_row(
                format!("phi_eq_res_lo_{tag}_h{h}"),
                LinExpr::from(phi[h]) - ctx.p_reserve[h] + m_pow * (LinExpr::constant(1.0) - g[h]),
                CmpOp::Ge,
                0.0,
            );
            model.add_row(
                format!("phi_eq_res_hi_{tag}_h{h}"),
                LinExpr::from(phi[h]) - ctx.p_reserve[h] - m_pow * (LinExpr::constant(1.0) - g[h]),
                CmpOp::Le,
                0.0,
            );
        }
        (Some(slack), Some(phi), Some(g))
    } else {
        (None, None, None)
    };

    ScenarioVars {
        p,
        p_up,
        p_dn,
        slack,
        phi,
        g,
        u_up,
        u_dn,
        y_up,
        y_dn,
        z_up,
        z_dn,
        t_air,
        t_food,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::solver::HighsBackend;
    use crate::scenario::PriceScenario;

    pub(crate) fn toy_spec(n_hours: usize) -> FreezerSpec {
        FreezerSpec {
            p_base: vec![1.0; n_hours],
            p_min: 0.0,
            p_nom: 2.0,
            lambda_penalty: 5000.0,
            defrost_hours: vec![],
        }
    }

    pub(crate) fn toy_exo(n_steps: usize, params: &ThermalParams) -> ExogenousDay {
        ExogenousDay::two_regime(
            n_steps,
            params.dt,
            0.7,
            0.7,
            20.0,
            &[],
            crate::thermal::OpeningHours::default(),
        )
    }

    fn toy_set(lambda_s: Vec<f64>, lambda_b: Vec<f64>, lambda_r: Vec<f64>) -> ScenarioSet {
        ScenarioSet {
            scenarios: vec![PriceScenario {
                lambda_s,
                lambda_b,
                source_date: None,
            }],
            probabilities: vec![1.0],
            lambda_r,
        }
    }

    #[test]
    fn one_hour_no_activation_objective_is_pure_reservation() {
        let spec = toy_spec(1);
        let params = ThermalParams::default();
        let exo = toy_exo(4, &params);
        // Balancing equals spot: never an up-regulation hour.
        let scen = toy_set(vec![100.0], vec![100.0], vec![50.0]);
        let m = build_stochastic_mfrr(&spec, &params, &exo, &scen, 1e4).unwrap();
        let sol = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
        // p_r = P_Base = 1 kW at 50 currency/MWh over 1 h = 0.05 currency.
        assert!((sol.objective - 0.05).abs() < 1e-9, "objective {}", sol.objective);
        assert!((sol.first_stage.p_reserve[0] - 1.0).abs() < 1e-6);
        assert!(sol.dispatch[0].p_up.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn flat_prices_full_reservation_except_defrost() {
        let mut spec = toy_spec(2);
        spec.defrost_hours = vec![1];
        let params = ThermalParams::default();
        let exo = toy_exo(8, &params);
        let scen = toy_set(vec![100.0, 100.0], vec![100.0, 100.0], vec![50.0, 50.0]);
        let m = build_stochastic_mfrr(&spec, &params, &exo, &scen, 1e4).unwrap();
        let sol = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
        assert!((sol.first_stage.p_reserve[0] - 1.0).abs() < 1e-6);
        assert!(sol.first_stage.p_reserve[1].abs() < 1e-9, "no reserve in defrost hours");
    }

    #[test]
    fn duplicated_scenarios_with_halved_probability_keep_objective() {
        let spec = toy_spec(2);
        let params = ThermalParams::default();
        let exo = toy_exo(8, &params);
        let one = toy_set(vec![100.0, 90.0], vec![160.0, 90.0], vec![20.0, 20.0]);
        let mut two = one.clone();
        two.scenarios.push(two.scenarios[0].clone());
        two.probabilities = vec![0.5, 0.5];
        let big_m = default_price_big_m(&one, &PolicyBounds::default());
        let m1 = build_stochastic_mfrr(&spec, &params, &exo, &one, big_m).unwrap();
        let m2 = build_stochastic_mfrr(&spec, &params, &exo, &two, big_m).unwrap();
        let opts = SolveOptions::default();
        let s1 = solve(&m1, &HighsBackend, &opts).unwrap();
        let s2 = solve(&m2, &HighsBackend, &opts).unwrap();
        assert!(
            (s1.objective - s2.objective).abs() < 1e-6 * (1.0 + s1.objective.abs()),
            "{} vs {}",
            s1.objective,
            s2.objective
        );
    }

    #[test]
    fn zero_policy_bids_next_hour_spot() {
        let lambda_s = vec![120.0, 80.0, 95.0];
        let bids = bid_prices(0.0, 0.0, &lambda_s);
        assert_eq!(bids, lambda_s);
        // alpha = 1 makes the bid the next hour's spot price.
        let bids = bid_prices(1.0, 0.0, &lambda_s);
        assert_eq!(bids[0], 80.0);
        assert_eq!(bids[1], 95.0);
        assert_eq!(bids[2], 95.0); // slope dropped in the last hour
    }

    #[test]
    fn oracle_dominates_fixed_policy_on_same_day() {
        let spec = toy_spec(2);
        let params = ThermalParams::default();
        let exo = toy_exo(8, &params);
        let day = crate::prices::PriceDay::new(
            "2022-01-01".parse().unwrap(),
            vec![100.0; 24],
            (0..24).map(|h| if h % 3 == 0 { 220.0 } else { 100.0 }).collect(),
            vec![10.0; 24],
        )
        .unwrap();
        // Shrink to 2 hours for the toy spec.
        let day2 = crate::prices::PriceDay {
            date: day.date,
            lambda_s: day.lambda_s[..2].to_vec(),
            lambda_b: day.lambda_b[..2].to_vec(),
            lambda_r: day.lambda_r[..2].to_vec(),
        };
        let scen = ScenarioSet {
            scenarios: vec![PriceScenario {
                lambda_s: day2.lambda_s.clone(),
                lambda_b: day2.lambda_b.clone(),
                source_date: None,
            }],
            probabilities: vec![1.0],
            lambda_r: day2.lambda_r.clone(),
        };
        let big_m = default_price_big_m(&scen, &PolicyBounds::default());
        let oracle = build_oracle(&spec, &params, &exo, &day2, big_m).unwrap();
        let opts = SolveOptions::default();
        let oracle_sol = solve(&oracle, &HighsBackend, &opts).unwrap();

        let mut fixed = build_oracle(&spec, &params, &exo, &day2, big_m).unwrap();
        fixed
            .fix_first_stage(&FirstStageDecision {
                p_reserve: vec![0.5, 0.5],
                alpha: 0.0,
                beta: 0.0,
            })
            .unwrap();
        let fixed_sol = solve(&fixed, &HighsBackend, &opts).unwrap();
        assert!(oracle_sol.objective >= fixed_sol.objective - 1e-9);
    }

    #[test]
    fn nonpositive_big_m_rejected() {
        let spec = toy_spec(1);
        let params = ThermalParams::default();
        let exo = toy_exo(4, &params);
        let scen = toy_set(vec![100.0], vec![100.0], vec![50.0]);
        assert!(build_stochastic_mfrr(&spec, &params, &exo, &scen, 0.0).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let spec = toy_spec(2);
        let params = ThermalParams::default();
        let exo = toy_exo(4, &params); // needs 8 steps for 2 hours
        let scen = toy_set(vec![100.0, 100.0], vec![100.0, 100.0], vec![50.0, 50.0]);
        assert!(build_stochastic_mfrr(&spec, &params, &exo, &scen, 1e4).is_err());
    }

    #[test]
    fn lp_and_mps_export_roundtrip_counts() {
        let spec = toy_spec(2);
        let params = ThermalParams::default();
        let exo = toy_exo(8, &params);
        let scen = toy_set(vec![100.0, 90.0], vec![150.0, 90.0], vec![20.0, 20.0]);
        let m = build_stochastic_mfrr(&spec, &params, &exo, &scen, 1e4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let lp = dir.path().join("m.lp");
        let mps = dir.path().join("m.mps");
        export_model(&m.model, &lp, ExportFormat::Lp).unwrap();
        export_model(&m.model, &mps, ExportFormat::Mps).unwrap();
        let lp_text = std::fs::read_to_string(&lp).unwrap();
        let n_rows_lp = lp_text
            .lines()
            .skip_while(|l| !l.starts_with("Subject To"))
            .take_while(|l| !l.starts_with("Bounds"))
            .filter(|l| l.contains(':'))
            .count();
        assert_eq!(n_rows_lp, m.model.n_rows());
        let mps_text = std::fs::read_to_string(&mps).unwrap();
        let n_rows_mps = mps_text
            .lines()
            .skip_while(|l| !l.starts_with("ROWS"))
            .take_while(|l| !l.starts_with("COLUMNS"))
            .filter(|l| [" L ", " G ", " E "].iter().any(|p| l.starts_with(p.trim_end())))
            .count();
        assert_eq!(n_rows_mps, m.model.n_rows());
    }
}
