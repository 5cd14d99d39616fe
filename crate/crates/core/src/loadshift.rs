//! Deterministic load shifting against known day-ahead prices.
//!
//! The reserve-bidding model stripped of scenarios, reservation and bid
//! machinery, re-objectived to minimise the spot cost of consumption. The
//! dispatch block (state machine, rebound rules, terminal temperature) is the
//! same code as in the reserve model, so thermal feasibility has one source
//! of truth. The resulting plan deviates from the day-ahead schedule; the
//! deviation volume is reported so a balance responsible party's imbalance
//! exposure can be priced externally, but it is deliberately not part of the
//! objective.

use std::io::Write;

use crate::error::{Error, Result, SolveError};
use crate::milp::ir::{LinExpr, Model, Sense};
use crate::milp::solver::{SolveOptions, SolveStatus, SolverBackend};
use crate::milp::{add_scenario_block, check_dims, Dims, ScenarioVars, MWH_PER_KWH};
use crate::prices::{format_float, FreezerSpec, PriceDay};
use crate::thermal::{
    baseline_trajectory, ExogenousDay, TemperatureTrajectory, ThermalParams, ThermalState,
    DEFAULT_SETPOINT,
};

/// The optimised consumption schedule.
#[derive(Debug, Clone)]
pub struct ShiftPlan {
    /// Shifted consumption per hour, kW.
    pub p: Vec<f64>,
    /// Spot-price saving versus the baseline, currency.
    pub savings: f64,
    /// Temperatures under the plan, per step.
    pub trajectory: TemperatureTrajectory,
    /// Total absolute deviation from the baseline, kWh; this is the volume a
    /// balance responsible party would have to settle.
    pub deviation_volume_kwh: f64,
    pub status: SolveStatus,
}

/// A built load-shifting model.
#[derive(Debug, Clone)]
pub struct LoadShiftModel {
    pub model: Model,
    pub dims: Dims,
    pub vars: ScenarioVars,
    pub spec: FreezerSpec,
    pub lambda_s: Vec<f64>,
    pub baseline: TemperatureTrajectory,
}

/// Builds the load-shifting problem for one day of spot prices.
pub fn build_load_shift(
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    day: &PriceDay,
) -> Result<LoadShiftModel> {
    build_load_shift_hours(spec, params, exo, &day.lambda_s, ThermalState::uniform(DEFAULT_SETPOINT))
}

/// Horizon-generic variant used directly by tests and the backtest engine.
pub fn build_load_shift_hours(
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    lambda_s: &[f64],
    init: ThermalState,
) -> Result<LoadShiftModel> {
    spec.validate()?;
    params.validate_for_horizon()?;
    if lambda_s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("spot prices must be finite"));
    }
    let dims = check_dims(spec, params, exo, lambda_s.len())?;
    let baseline = baseline_trajectory(params, exo, &spec.p_base, init)?;

    let mut model = Model::new("loadshift", Sense::Minimize);
    let vars = add_scenario_block(&mut model, "ls", spec, params, exo, dims, &baseline, init, None);

    let mut objective = LinExpr::default();
    for h in 0..dims.n_hours {
        objective.add_term(vars.p[h], lambda_s[h] * MWH_PER_KWH);
    }
    model.set_objective(objective);

    Ok(LoadShiftModel {
        model,
        dims,
        vars,
        spec: spec.clone(),
        lambda_s: lambda_s.to_vec(),
        baseline,
    })
}

/// Solves the plan and evaluates savings against the baseline.
pub fn solve_load_shift(
    ls: &LoadShiftModel,
    backend: &dyn SolverBackend,
    opts: &SolveOptions,
) -> Result<ShiftPlan> {
    let sol = backend.solve(&ls.model, opts).map_err(|e| match e {
        SolveError::Infeasible { .. } => SolveError::Infeasible {
            hint: "terminal food temperature / rebound-stop family".into(),
        },
        other => other,
    })?;
    let p: Vec<f64> = ls.vars.p.iter().map(|&v| sol.value(v)).collect();
    let trajectory = TemperatureTrajectory {
        t_air: ls.vars.t_air.iter().map(|&v| sol.value(v)).collect(),
        t_food: ls.vars.t_food.iter().map(|&v| sol.value(v)).collect(),
    };
    let deviation_volume_kwh = p
        .iter()
        .zip(&ls.spec.p_base)
        .map(|(p, b)| (p - b).abs())
        .sum();
    Ok(ShiftPlan {
        savings: plan_savings(&p, &ls.lambda_s, &ls.spec),
        p,
        trajectory,
        deviation_volume_kwh,
        status: sol.status,
    })
}

/// Spot saving of a plan: `sum_h lambda_s_h * (P_Base_h - p_h)`, currency.
pub fn savings(plan: &ShiftPlan, day: &PriceDay, spec: &FreezerSpec) -> f64 {
    plan_savings(&plan.p, &day.lambda_s, spec)
}

fn plan_savings(p: &[f64], lambda_s: &[f64], spec: &FreezerSpec) -> f64 {
    p.iter()
        .zip(lambda_s)
        .zip(&spec.p_base)
        .map(|((p, l), b)| l * (b - p) * MWH_PER_KWH)
        .sum()
}

/// Plan export: `hour,p_base_kw,p_shifted_kw,spot_price,trajectory_t_air,trajectory_t_food`.
/// Temperatures are sampled at the last step of each hour.
pub fn write_shift_plan_csv(mut w: impl Write, plan: &ShiftPlan, lambda_s: &[f64], spec: &FreezerSpec) -> Result<()> {
    let n_hours = plan.p.len();
    let steps_per_hour = plan.trajectory.len() / n_hours;
    writeln!(w, "hour,p_base_kw,p_shifted_kw,spot_price,trajectory_t_air,trajectory_t_food")
        .map_err(|e| Error::io("<plan writer>", e))?;
    for h in 0..n_hours {
        let t = (h + 1) * steps_per_hour - 1;
        writeln!(
            w,
            "{h},{},{},{},{},{}",
            format_float(spec.p_base[h]),
            format_float(plan.p[h]),
            format_float(lambda_s[h]),
            format_float(plan.trajectory.t_air[t]),
            format_float(plan.trajectory.t_food[t]),
        )
        .map_err(|e| Error::io("<plan writer>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::solver::HighsBackend;
    use crate::thermal::OpeningHours;

    fn spec2() -> FreezerSpec {
        FreezerSpec {
            p_base: vec![1.0, 1.0],
            p_min: 0.0,
            p_nom: 2.0,
            lambda_penalty: 5000.0,
            defrost_hours: vec![],
        }
    }

    fn exo(n_steps: usize, params: &ThermalParams) -> ExogenousDay {
        ExogenousDay::two_regime(n_steps, params.dt, 0.7, 0.7, 20.0, &[], OpeningHours::default())
    }

    #[test]
    fn baseline_is_feasible_so_cost_never_exceeds_base() {
        let spec = spec2();
        let params = ThermalParams::default();
        let exo = exo(8, &params);
        let lambda_s = [300.0, 100.0];
        let ls = build_load_shift_hours(&spec, &params, &exo, &lambda_s, ThermalState::uniform(-18.0)).unwrap();
        let plan = solve_load_shift(&ls, &HighsBackend, &SolveOptions::default()).unwrap();
        assert!(plan.savings >= -1e-9, "savings {}", plan.savings);
    }

    #[test]
    fn high_low_split_moves_consumption_to_cheap_hour() {
        let spec = spec2();
        let params = ThermalParams::default();
        let exo = exo(8, &params);
        let lambda_s = [500.0, 50.0];
        let ls = build_load_shift_hours(&spec, &params, &exo, &lambda_s, ThermalState::uniform(-18.0)).unwrap();
        let plan = solve_load_shift(&ls, &HighsBackend, &SolveOptions::default()).unwrap();
        assert!(plan.p[0] < spec.p_base[0] - 1e-6, "expensive hour should shed, got {:?}", plan.p);
        assert!(plan.p[1] > spec.p_base[1] + 1e-6, "cheap hour should rebound, got {:?}", plan.p);
        assert!(plan.savings > 0.0);
    }

    #[test]
    fn savings_formula_hand_check() {
        let spec = spec2();
        let plan_p = [0.4, 1.5];
        let lambda_s = [500.0, 50.0];
        let expected = (500.0 * (1.0 - 0.4) + 50.0 * (1.0 - 1.5)) / 1000.0;
        let got: f64 = plan_p
            .iter()
            .zip(&lambda_s)
            .zip(&spec.p_base)
            .map(|((p, l), b)| l * (b - p) / 1000.0)
            .sum();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.275).abs() < 1e-12);
    }

    #[test]
    fn doubling_prices_doubles_savings_value() {
        let spec = spec2();
        let params = ThermalParams::default();
        let exo = exo(8, &params);
        let l1 = [500.0, 50.0];
        let l2 = [1000.0, 100.0];
        let opts = SolveOptions::default();
        let p1 = solve_load_shift(
            &build_load_shift_hours(&spec, &params, &exo, &l1, ThermalState::uniform(-18.0)).unwrap(),
            &HighsBackend,
            &opts,
        )
        .unwrap();
        let p2 = solve_load_shift(
            &build_load_shift_hours(&spec, &params, &exo, &l2, ThermalState::uniform(-18.0)).unwrap(),
            &HighsBackend,
            &opts,
        )
        .unwrap();
        // Both plans are optimal for both price vectors (positive scaling),
        // so their costs agree under either one.
        let cost = |p: &[f64], l: &[f64]| -> f64 { p.iter().zip(l).map(|(p, l)| p * l).sum() };
        assert!((cost(&p1.p, &l1) - cost(&p2.p, &l1)).abs() < 1e-6);
        assert!((2.0 * p1.savings - p2.savings).abs() < 1e-6);
    }

    #[test]
    fn terminal_food_temperature_no_warmer_than_baseline() {
        let spec = spec2();
        let params = ThermalParams::default();
        let exo = exo(8, &params);
        let lambda_s = [500.0, 50.0];
        let ls = build_load_shift_hours(&spec, &params, &exo, &lambda_s, ThermalState::uniform(-18.0)).unwrap();
        let plan = solve_load_shift(&ls, &HighsBackend, &SolveOptions::default()).unwrap();
        let last = plan.trajectory.len() - 1;
        assert!(plan.trajectory.t_food[last] <= ls.baseline.t_food[last] + 1e-6);
    }

    #[test]
    fn plan_csv_has_expected_shape() {
        let spec = spec2();
        let params = ThermalParams::default();
        let exo = exo(8, &params);
        let lambda_s = [500.0, 50.0];
        let ls = build_load_shift_hours(&spec, &params, &exo, &lambda_s, ThermalState::uniform(-18.0)).unwrap();
        let plan = solve_load_shift(&ls, &HighsBackend, &SolveOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_shift_plan_csv(&mut buf, &plan, &lambda_s, &spec).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("hour,p_base_kw,p_shifted_kw,spot_price"));
    }
}
