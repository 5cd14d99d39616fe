//! Seeded synthetic market data and toy instances.

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tclflex::prices::{FreezerSpec, PriceDay};
use tclflex::scenario::{PriceScenario, ScenarioSet};
use tclflex::thermal::{ExogenousDay, OpeningHours, ThermalParams};

/// A spot shape with morning/evening peaks, plus balancing spikes on a random
/// subset of hours so up-regulation frequencies vary day to day.
pub fn synth_price_days(seed: u64, n_days: usize, start: NaiveDate) -> Vec<PriceDay> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_days)
        .map(|i| {
            let date = start + chrono::Days::new(i as u64);
            let level = 250.0 + rng.gen_range(-60.0..60.0);
            let lambda_s: Vec<f64> = (0..24)
                .map(|h| {
                    let shape = 60.0 * ((h as f64 - 8.0) * std::f64::consts::PI / 12.0).sin()
                        + 30.0 * ((h as f64 - 18.0) * std::f64::consts::PI / 6.0).sin();
                    (level + shape + rng.gen_range(-15.0..15.0)).max(1.0)
                })
                .collect();
            // Some days see no up-regulation at all.
            let spike_prob = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.05..0.5) };
            let lambda_b: Vec<f64> = lambda_s
                .iter()
                .map(|s| {
                    if rng.gen_bool(spike_prob) {
                        s + rng.gen_range(20.0..400.0)
                    } else {
                        *s
                    }
                })
                .collect();
            let lambda_r: Vec<f64> = (0..24).map(|_| rng.gen_range(2.0..18.0)).collect();
            PriceDay::new(date, lambda_s, lambda_b, lambda_r).expect("synthetic day is well-formed")
        })
        .collect()
}

/// The default 24-hour freezer: two-regime baseline, defrost in hours 6-7.
pub fn spec24() -> FreezerSpec {
    FreezerSpec {
        p_base: (0..24).map(|h| if (6..22).contains(&h) { 0.9 } else { 0.6 }).collect(),
        p_min: 0.0,
        p_nom: 1.8,
        lambda_penalty: 3000.0,
        defrost_hours: vec![6, 7],
    }
}

/// Matching exogenous day: valve more open while the store is open, defrost
/// on the first two steps of hour 6.
pub fn exo24(params: &ThermalParams) -> ExogenousDay {
    ExogenousDay::two_regime(
        24 * params.steps_per_hour(),
        params.dt,
        0.7,
        0.5,
        20.0,
        &[24, 25],
        OpeningHours::default(),
    )
}

/// A randomized 2-hour instance for activation and enumeration checks.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub spec: FreezerSpec,
    pub params: ThermalParams,
    pub exo: ExogenousDay,
    pub scen: ScenarioSet,
}

/// Random 2-hour instance with `n_scenarios` price draws. Prices can tie,
/// spike or invert so every activation branch gets exercised.
pub fn toy_2h_instance(seed: u64, n_scenarios: usize) -> ToyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ThermalParams::default();
    let p_base: Vec<f64> = (0..2).map(|_| rng.gen_range(0.6..1.2)).collect();
    let min_base = p_base.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_base = p_base.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spec = FreezerSpec {
        p_min: rng.gen_range(0.0..0.5) * min_base,
        p_nom: max_base * rng.gen_range(1.3..2.0),
        lambda_penalty: rng.gen_range(800.0..4000.0),
        defrost_hours: if rng.gen_bool(0.15) { vec![rng.gen_range(0..2)] } else { vec![] },
        p_base,
    };
    let exo = ExogenousDay::two_regime(8, params.dt, 0.7, 0.7, 20.0, &[], OpeningHours::default());
    let scenarios: Vec<PriceScenario> = (0..n_scenarios)
        .map(|_| {
            let lambda_s: Vec<f64> = (0..2).map(|_| rng.gen_range(20.0..400.0)).collect();
            let lambda_b: Vec<f64> = lambda_s
                .iter()
                .map(|s| match rng.gen_range(0..4) {
                    0 => *s,                            // tie with spot
                    1 => s - rng.gen_range(0.0..80.0),  // down-regulation hour
                    _ => s + rng.gen_range(0.0..300.0), // possible activation
                })
                .collect();
            PriceScenario {
                lambda_s,
                lambda_b,
                source_date: None,
            }
        })
        .collect();
    let scen = ScenarioSet {
        probabilities: vec![1.0 / n_scenarios as f64; n_scenarios],
        scenarios,
        lambda_r: (0..2).map(|_| rng.gen_range(0.0..30.0)).collect(),
    };
    ToyInstance {
        spec,
        params,
        exo,
        scen,
    }
}

/// A fixed random policy within the instance's box, for dispatch-only checks.
pub fn random_fixed_policy(instance: &ToyInstance, seed: u64) -> tclflex::milp::FirstStageDecision {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tclflex::milp::FirstStageDecision {
        p_reserve: instance
            .spec
            .p_base
            .iter()
            .enumerate()
            .map(|(h, &b)| {
                if instance.spec.is_defrost_hour(h) {
                    0.0
                } else {
                    rng.gen_range(0.0..=b)
                }
            })
            .collect(),
        alpha: rng.gen_range(0.0..2.0),
        beta: rng.gen_range(0.0..150.0),
    }
}
