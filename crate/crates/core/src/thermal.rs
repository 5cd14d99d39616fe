//! Second-order grey-box model of a supermarket freezer.
//!
//! Two coupled states: the air temperature inside the cabinet (fast) and the
//! food temperature (slow, unobserved). The food state is a low-pass filter
//! of the air state with time constant `C_f * R_cf`. The air state exchanges
//! heat with the food, leaks towards the indoor temperature through `R_ci`
//! (a day and a night value, switched on opening hours), is cooled by the
//! compressor in proportion to power and valve opening degree, and gets a
//! fixed temperature kick on defrost steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted physical parameters of the freezer model.
///
/// Defaults are the estimates for the Danish supermarket freezer this tool
/// was built around; override them from the config file for other assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Thermal capacitance of the food, kWh/degC.
    #[serde(rename = "C_f")]
    pub c_f: f64,
    /// Thermal capacitance of the cabinet air, kWh/degC.
    #[serde(rename = "C_c")]
    pub c_c: f64,
    /// Thermal resistance between food and cabinet air, degC/kW.
    #[serde(rename = "R_cf")]
    pub r_cf: f64,
    /// Air-to-indoor resistance during opening hours, degC/kW.
    #[serde(rename = "R_ci_day")]
    pub r_ci_day: f64,
    /// Air-to-indoor resistance during closing hours, degC/kW.
    #[serde(rename = "R_ci_night")]
    pub r_ci_night: f64,
    /// Compressor efficiency (cooling kW per electrical kW at full opening).
    pub eta: f64,
    /// Temperature kick applied on defrost steps, degC.
    pub eps: f64,
    /// Step length in hours.
    pub dt: f64,
    /// Steps per day.
    #[serde(rename = "J")]
    pub steps_per_day: usize,
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams {
            c_f: 6.552,
            c_c: 0.077,
            r_cf: 5.010,
            r_ci_day: 41.05,
            r_ci_night: 61.25,
            eta: 1.561,
            eps: 3.372,
            dt: 0.25,
            steps_per_day: 96,
        }
    }
}

impl ThermalParams {
    /// Checks positivity of all coefficients and that the steps tile a day.
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("C_f", self.c_f),
            ("C_c", self.c_c),
            ("R_cf", self.r_cf),
            ("R_ci_day", self.r_ci_day),
            ("R_ci_night", self.r_ci_night),
            ("eta", self.eta),
            ("dt", self.dt),
        ];
        for (name, v) in pos {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if !self.eps.is_finite() {
            return Err(Error::invalid("eps must be finite"));
        }
        if (self.steps_per_day as f64 * self.dt - 24.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "J*dt must equal 24 h, got {} * {} = {}",
                self.steps_per_day,
                self.dt,
                self.steps_per_day as f64 * self.dt
            )));
        }
        Ok(())
    }

    /// Steps per market hour (4 at dt = 0.25 h).
    pub fn steps_per_hour(&self) -> usize {
        (1.0 / self.dt).round() as usize
    }

    /// Coefficient of the food update: dt / (C_f * R_cf).
    pub fn food_gain(&self) -> f64 {
        self.dt / (self.c_f * self.r_cf)
    }

    pub fn r_ci(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Day => self.r_ci_day,
            Regime::Night => self.r_ci_night,
        }
    }
}

/// Which air-to-indoor resistance applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Day,
    Night,
}

/// Store opening window, used to pick the day/night resistance.
///
/// A step is in the day regime when its wall-clock start hour lies in
/// `[open_hour, close_hour)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeningHours {
    pub open_hour: f64,
    pub close_hour: f64,
}

impl Default for OpeningHours {
    fn default() -> Self {
        OpeningHours {
            open_hour: 6.0,
            close_hour: 22.0,
        }
    }
}

impl OpeningHours {
    pub fn regime_at(&self, wallclock_h: f64) -> Regime {
        let h = wallclock_h.rem_euclid(24.0);
        if h >= self.open_hour && h < self.close_hour {
            Regime::Day
        } else {
            Regime::Night
        }
    }
}

/// Exogenous inputs for one simulated horizon, one entry per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousDay {
    /// Expansion-valve opening degree, in [0, 1].
    pub od: Vec<f64>,
    /// Indoor (supermarket) air temperature, degC.
    pub t_indoor: Vec<f64>,
    /// Defrost indicator per step.
    pub defrost: Vec<bool>,
    #[serde(default)]
    pub opening_hours: OpeningHours,
}

impl ExogenousDay {
    /// Two-regime profile: `od_day` during opening hours, `od_night` outside,
    /// valve closed on defrost steps. `defrost_steps` are step indices.
    pub fn two_regime(
        n_steps: usize,
        dt: f64,
        od_day: f64,
        od_night: f64,
        t_indoor: f64,
        defrost_steps: &[usize],
        opening_hours: OpeningHours,
    ) -> Self {
        let mut od = Vec::with_capacity(n_steps);
        let mut defrost = vec![false; n_steps];
        for &s in defrost_steps {
            if s < n_steps {
                defrost[s] = true;
            }
        }
        for t in 0..n_steps {
            if defrost[t] {
                od.push(0.0);
            } else {
                match opening_hours.regime_at(t as f64 * dt) {
                    Regime::Day => od.push(od_day),
                    Regime::Night => od.push(od_night),
                }
            }
        }
        ExogenousDay {
            od,
            t_indoor: vec![t_indoor; n_steps],
            defrost,
            opening_hours,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.od.len()
    }

    pub fn validate(&self, expected_steps: usize) -> Result<()> {
        if self.od.len() != expected_steps
            || self.t_indoor.len() != expected_steps
            || self.defrost.len() != expected_steps
        {
            return Err(Error::invalid(format!(
                "exogenous series lengths ({}, {}, {}) do not match the horizon of {} steps",
                self.od.len(),
                self.t_indoor.len(),
                self.defrost.len(),
                expected_steps
            )));
        }
        for (t, &v) in self.od.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("od[{t}] = {v} outside [0, 1]")));
            }
        }
        if self.t_indoor.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("t_indoor contains non-finite values"));
        }
        Ok(())
    }

    pub fn regime_at_step(&self, t: usize, dt: f64) -> Regime {
        self.opening_hours.regime_at(t as f64 * dt)
    }
}

/// Food and air temperature, one value per step; index 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureTrajectory {
    pub t_food: Vec<f64>,
    pub t_air: Vec<f64>,
}

impl TemperatureTrajectory {
    pub fn len(&self) -> usize {
        self.t_food.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_food.is_empty()
    }

    pub fn last_state(&self) -> ThermalState {
        ThermalState {
            t_food: *self.t_food.last().expect("non-empty trajectory"),
            t_air: *self.t_air.last().expect("non-empty trajectory"),
        }
    }
}

/// Instantaneous (food, air) temperature pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub t_food: f64,
    pub t_air: f64,
}

impl ThermalState {
    pub fn uniform(setpoint: f64) -> Self {
        ThermalState {
            t_food: setpoint,
            t_air: setpoint,
        }
    }
}

/// Default air/food setpoint, degC.
pub const DEFAULT_SETPOINT: f64 = -18.0;

/// Per-step inputs of the forward update.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs {
    pub od: f64,
    pub t_indoor: f64,
    pub defrost: bool,
    pub power_kw: f64,
}

/// One forward-Euler update of the two-state model.
///
/// The food state sees only the food-air exchange; the air state sees the
/// food-air exchange, the leak towards indoor (through the regime-selected
/// resistance), the compressor cooling and the defrost kick.
pub fn step(
    params: &ThermalParams,
    state: ThermalState,
    inputs: StepInputs,
    regime: Regime,
) -> Result<ThermalState> {
    for (name, v) in [
        ("t_food", state.t_food),
        ("t_air", state.t_air),
        ("od", inputs.od),
        ("t_indoor", inputs.t_indoor),
        ("power_kw", inputs.power_kw),
    ] {
        if !v.is_finite() {
            return Err(Error::invalid(format!("non-finite {name}: {v}")));
        }
    }
    if inputs.power_kw < 0.0 {
        return Err(Error::invalid(format!(
            "power must be non-negative, got {}",
            inputs.power_kw
        )));
    }

    let t_food = state.t_food + params.food_gain() * (state.t_air - state.t_food);
    let mut t_air = state.t_air
        + params.dt / params.c_c
            * ((state.t_food - state.t_air) / params.r_cf
                + (inputs.t_indoor - state.t_air) / params.r_ci(regime)
                - params.eta * inputs.od * inputs.power_kw);
    if inputs.defrost {
        t_air += params.eps;
    }
    Ok(ThermalState { t_food, t_air })
}

/// Simulates a horizon under a per-step power profile.
///
/// The returned trajectory has as many entries as the profile; entry 0 is the
/// initial state and entry `t` results from applying the inputs of steps
/// `0..t`. The final profile entry therefore never enters an update; it is
/// required anyway so profiles and exogenous series share one shape.
pub fn simulate_day(
    params: &ThermalParams,
    exo: &ExogenousDay,
    power_per_step: &[f64],
    init: ThermalState,
) -> Result<TemperatureTrajectory> {
    let n = exo.n_steps();
    if n == 0 {
        return Err(Error::invalid("exogenous horizon is empty"));
    }
    if power_per_step.len() != n {
        return Err(Error::invalid(format!(
            "power profile has {} steps, exogenous horizon has {n}",
            power_per_step.len()
        )));
    }
    exo.validate(n)?;

    let mut t_food = Vec::with_capacity(n);
    let mut t_air = Vec::with_capacity(n);
    let mut state = init;
    t_food.push(state.t_food);
    t_air.push(state.t_air);
    for t in 0..n - 1 {
        state = step(
            params,
            state,
            StepInputs {
                od: exo.od[t],
                t_indoor: exo.t_indoor[t],
                defrost: exo.defrost[t],
                power_kw: power_per_step[t],
            },
            exo.regime_at_step(t, params.dt),
        )?;
        t_food.push(state.t_food);
        t_air.push(state.t_air);
    }
    Ok(TemperatureTrajectory { t_food, t_air })
}

/// Expands an hourly power profile to steps: hour `h` owns steps
/// `h*steps_per_hour .. (h+1)*steps_per_hour`.
pub fn expand_hourly(p_per_hour: &[f64], steps_per_hour: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(p_per_hour.len() * steps_per_hour);
    for &p in p_per_hour {
        out.extend(std::iter::repeat(p).take(steps_per_hour));
    }
    out
}

/// Trajectory under the hourly baseline consumption. The result is injected
/// into the optimisation models as constants.
pub fn baseline_trajectory(
    params: &ThermalParams,
    exo: &ExogenousDay,
    p_base_per_hour: &[f64],
    init: ThermalState,
) -> Result<TemperatureTrajectory> {
    let sph = params.steps_per_hour();
    if p_base_per_hour.len() * sph != exo.n_steps() {
        return Err(Error::invalid(format!(
            "baseline profile covers {} steps, exogenous horizon has {}",
            p_base_per_hour.len() * sph,
            exo.n_steps()
        )));
    }
    simulate_day(params, exo, &expand_hourly(p_base_per_hour, sph), init)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ThermalParams {
        ThermalParams::default()
    }

    fn still_air_inputs(t_indoor: f64) -> StepInputs {
        StepInputs {
            od: 1.0,
            t_indoor,
            defrost: false,
            power_kw: 0.0,
        }
    }

    #[test]
    fn food_term_vanishes_when_air_equals_food() {
        let s = step(
            &params(),
            ThermalState::uniform(-18.0),
            still_air_inputs(20.0),
            Regime::Day,
        )
        .unwrap();
        assert!((s.t_food - (-18.0)).abs() < 1e-12);
    }

    #[test]
    fn air_update_matches_hand_arithmetic() {
        // -18 + (0.25/0.077) * ((20 - (-18)) / 41.05), no power, no defrost.
        let expected = -18.0 + (0.25 / 0.077) * ((20.0 - (-18.0)) / 41.05);
        let s = step(
            &params(),
            ThermalState::uniform(-18.0),
            still_air_inputs(20.0),
            Regime::Day,
        )
        .unwrap();
        assert!((s.t_air - expected).abs() < 1e-12);
        assert!((s.t_air - (-14.994)).abs() < 1e-3);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let s0 = ThermalState::uniform(20.0);
        let s = step(&params(), s0, still_air_inputs(20.0), Regime::Night).unwrap();
        assert!((s.t_food - 20.0).abs() < 1e-12);
        assert!((s.t_air - 20.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let err = step(
            &params(),
            ThermalState {
                t_food: f64::NAN,
                t_air: -18.0,
            },
            still_air_inputs(20.0),
            Regime::Day,
        );
        assert!(err.is_err());
        let err = step(
            &params(),
            ThermalState::uniform(-18.0),
            StepInputs {
                power_kw: -1.0,
                ..still_air_inputs(20.0)
            },
            Regime::Day,
        );
        assert!(err.is_err());
    }

    #[test]
    fn defrost_adds_eps_to_air_only() {
        let p = params();
        let base = step(
            &p,
            ThermalState::uniform(-18.0),
            still_air_inputs(20.0),
            Regime::Day,
        )
        .unwrap();
        let with_df = step(
            &p,
            ThermalState::uniform(-18.0),
            StepInputs {
                defrost: true,
                ..still_air_inputs(20.0)
            },
            Regime::Day,
        )
        .unwrap();
        assert!((with_df.t_air - base.t_air - p.eps).abs() < 1e-12);
        assert!((with_df.t_food - base.t_food).abs() < 1e-12);
    }

    #[test]
    fn single_step_horizon_returns_initial_state() {
        let p = params();
        let exo = ExogenousDay::two_regime(1, p.dt, 0.7, 0.5, 20.0, &[], OpeningHours::default());
        let traj = simulate_day(&p, &exo, &[1.0], ThermalState::uniform(-18.0)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.t_food[0], -18.0);
        assert_eq!(traj.t_air[0], -18.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let p = params();
        let exo = ExogenousDay::two_regime(8, p.dt, 0.7, 0.5, 20.0, &[], OpeningHours::default());
        assert!(simulate_day(&p, &exo, &[0.0; 7], ThermalState::uniform(-18.0)).is_err());
    }

    #[test]
    fn off_window_heats_then_rebound_cools() {
        let p = params();
        let n = 96;
        let exo = ExogenousDay::two_regime(n, p.dt, 0.7, 0.7, 20.0, &[], OpeningHours::default());
        // Nominal power that roughly holds -18 degC, off for steps 8..16.
        let nominal = (20.0 - (-18.0)) / p.r_ci_day / (p.eta * 0.7);
        let mut profile = vec![nominal; n];
        for it in profile.iter_mut().take(16).skip(8) {
            *it = 0.0;
        }
        let rebound = 3.0 * nominal;
        for it in profile.iter_mut().take(32).skip(16) {
            *it = rebound;
        }
        let traj = simulate_day(&p, &exo, &profile, ThermalState::uniform(-18.0)).unwrap();
        // Strictly increasing air temperature over the off window...
        for t in 8..16 {
            assert!(
                traj.t_air[t + 1] > traj.t_air[t],
                "air should heat during off window at step {t}"
            );
        }
        // ...and strictly decreasing during the rebound.
        for t in 16..24 {
            assert!(
                traj.t_air[t + 1] < traj.t_air[t],
                "air should cool during rebound at step {t}"
            );
        }
    }

    #[test]
    fn baseline_equals_simulation_on_same_profile() {
        let p = params();
        let exo = ExogenousDay::two_regime(96, p.dt, 0.7, 0.5, 20.0, &[24, 25], OpeningHours::default());
        let hourly: Vec<f64> = (0..24).map(|h| if (6..22).contains(&h) { 0.9 } else { 0.6 }).collect();
        let init = ThermalState::uniform(-18.0);
        let a = baseline_trajectory(&p, &exo, &hourly, init).unwrap();
        let b = simulate_day(&p, &exo, &expand_hourly(&hourly, 4), init).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn defrost_bump_shows_only_in_scheduled_hours() {
        let p = params();
        // Defrost on the first two steps of hour 6 (wall clock 06:00-06:30).
        let defrost_steps = [24, 25];
        let exo_df =
            ExogenousDay::two_regime(96, p.dt, 0.7, 0.5, 20.0, &defrost_steps, OpeningHours::default());
        let exo_plain = ExogenousDay::two_regime(96, p.dt, 0.7, 0.5, 20.0, &[], OpeningHours::default());
        let hourly: Vec<f64> = (0..24).map(|h| if (6..22).contains(&h) { 0.9 } else { 0.6 }).collect();
        let init = ThermalState::uniform(-18.0);
        let with_df = baseline_trajectory(&p, &exo_df, &hourly, init).unwrap();
        let plain = baseline_trajectory(&p, &exo_plain, &hourly, init).unwrap();
        // No difference before the defrost window.
        for t in 0..=24 {
            assert!((with_df.t_air[t] - plain.t_air[t]).abs() < 1e-12);
        }
        // Clear bump right after it.
        assert!(with_df.t_air[26] - plain.t_air[26] > 1.0);
    }

    #[test]
    fn two_step_baseline_hand_check() {
        let p = ThermalParams {
            dt: 0.25,
            steps_per_day: 96,
            ..ThermalParams::default()
        };
        let exo = ExogenousDay {
            od: vec![0.5, 0.5],
            t_indoor: vec![20.0, 20.0],
            defrost: vec![false, false],
            opening_hours: OpeningHours::default(),
        };
        let traj = simulate_day(&p, &exo, &[1.0, 1.0], ThermalState::uniform(-18.0)).unwrap();
        let t_food_1 = -18.0 + p.dt / (p.c_f * p.r_cf) * 0.0;
        let t_air_1 = -18.0
            + p.dt / p.c_c * (0.0 / p.r_cf + (20.0 - (-18.0)) / p.r_ci_night - p.eta * 0.5 * 1.0);
        assert!((traj.t_food[1] - t_food_1).abs() < 1e-12);
        assert!((traj.t_air[1] - t_air_1).abs() < 1e-12);
    }

    #[test]
    fn convergence_to_indoor_without_power() {
        let p = params();
        let n = 96 * 10;
        let exo = ExogenousDay {
            od: vec![0.0; n],
            t_indoor: vec![20.0; n],
            defrost: vec![false; n],
            opening_hours: OpeningHours {
                open_hour: 0.0,
                close_hour: 24.0,
            },
        };
        let traj = simulate_day(&p, &exo, &vec![0.0; n], ThermalState::uniform(-18.0)).unwrap();
        for t in 0..n - 1 {
            assert!(traj.t_air[t + 1] >= traj.t_air[t] - 1e-12);
            assert!(traj.t_food[t + 1] >= traj.t_food[t] - 1e-12);
            assert!(traj.t_air[t + 1] <= 20.0 + 1e-9);
            assert!(traj.t_food[t + 1] <= 20.0 + 1e-9);
        }
        // Air gap decays geometrically: compare 100-step blocks.
        let gap = |t: usize| 20.0 - traj.t_air[t];
        for k in (0..n - 200).step_by(100) {
            assert!(gap(k + 100) < 0.95 * gap(k), "gap did not contract at step {k}");
        }
    }

    #[test]
    fn food_is_low_pass_of_air() {
        let p = params();
        let n = 96;
        let exo = ExogenousDay::two_regime(n, p.dt, 0.7, 0.5, 20.0, &[], OpeningHours::default());
        let mut profile = vec![1.0; n];
        for it in profile.iter_mut().skip(40).take(16) {
            *it = 0.0;
        }
        let traj = simulate_day(&p, &exo, &profile, ThermalState::uniform(-18.0)).unwrap();
        let bound = p.food_gain();
        for t in 0..n - 1 {
            let dfood = (traj.t_food[t + 1] - traj.t_food[t]).abs();
            let gap = (traj.t_air[t] - traj.t_food[t]).abs();
            assert!(dfood <= bound * gap + 1e-12);
        }
    }
}
