//! The production solve path against the exhaustive enumeration oracle, plus
//! hand-built instances whose optima are known by direct reasoning.

use tclflex::loadshift::{build_load_shift_hours, solve_load_shift};
use tclflex::milp::ir::Sense;
use tclflex::milp::solver::{HighsBackend, SolveOptions};
use tclflex::milp::{
    build_oracle, build_stochastic_mfrr_with, default_price_big_m, export_model, solve,
    ExportFormat, FirstStageDecision, PolicyBounds,
};
use tclflex::prices::{FreezerSpec, PriceDay};
use tclflex::scenario::{PriceScenario, ScenarioSet};
use tclflex::thermal::{ExogenousDay, OpeningHours, ThermalParams, ThermalState, DEFAULT_SETPOINT};
use tclflex_testkit::enumeration::{
    all_binaries_covered, enumerate_generic, enumerate_loadshift_optimum, enumerate_mfrr_optimum,
};
use tclflex_testkit::invariants::check_dispatch_invariants;
use tclflex_testkit::mpsread;
use tclflex_testkit::synth::toy_2h_instance;

fn default_init() -> ThermalState {
    ThermalState::uniform(DEFAULT_SETPOINT)
}

#[test]
fn extensive_form_matches_enumeration_on_random_toys() {
    let bounds = PolicyBounds::default();
    let opts = SolveOptions::default();
    for seed in 0..12u64 {
        let n_scen = 1 + (seed % 2) as usize;
        let inst = toy_2h_instance(1000 + seed, n_scen);
        let big_m = default_price_big_m(&inst.scen, &bounds);
        let m = build_stochastic_mfrr_with(
            &inst.spec, &inst.params, &inst.exo, &inst.scen, big_m, &bounds, default_init(),
        )
        .unwrap();
        assert!(all_binaries_covered(
            &m.model,
            &m.scenarios.iter().cloned().collect::<Vec<_>>()
        ));
        let hs = solve(&m, &HighsBackend, &opts).unwrap();
        let en = enumerate_mfrr_optimum(&m).unwrap().expect("feasible instance");
        assert_eq!(en.lp_failures, 0, "seed {seed}: oracle LPs failed");
        let rel = (hs.objective - en.objective).abs() / (1.0 + hs.objective.abs());
        assert!(
            rel < 1e-6,
            "seed {seed}: highs {} vs enumeration {}",
            hs.objective,
            en.objective
        );
        let violations = check_dispatch_invariants(&m, &hs.first_stage, &hs.dispatch);
        assert!(violations.is_empty(), "seed {seed}: {violations:?}");
    }
}

#[test]
fn certain_activation_without_headroom_sells_nothing() {
    // Balancing far above spot, bid == spot well under the gap, but
    // P_Min == P_Base leaves no room to deliver: with a penalty dwarfing the
    // reservation price, the only sane reserve is zero.
    let params = ThermalParams::default();
    let spec = FreezerSpec {
        p_base: vec![1.0, 1.0],
        p_min: 1.0,
        p_nom: 2.0,
        lambda_penalty: 1e6,
        defrost_hours: vec![],
    };
    let exo = ExogenousDay::two_regime(8, params.dt, 0.7, 0.7, 20.0, &[], OpeningHours::default());
    let scen = ScenarioSet {
        scenarios: vec![PriceScenario {
            lambda_s: vec![10.0, 10.0],
            lambda_b: vec![100.0, 100.0],
            source_date: None,
        }],
        probabilities: vec![1.0],
        lambda_r: vec![50.0, 50.0],
    };
    // Pin the policy so the bid cannot escape activation.
    let bounds = PolicyBounds {
        alpha_max: 0.0,
        beta_max: 0.0,
    };
    let big_m = default_price_big_m(&scen, &bounds).max(1.0);
    let m = build_stochastic_mfrr_with(&spec, &params, &exo, &scen, big_m, &bounds, default_init()).unwrap();
    let hs = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
    let en = enumerate_mfrr_optimum(&m).unwrap().expect("feasible");
    assert!((hs.objective - en.objective).abs() < 1e-6 * (1.0 + hs.objective.abs()));
    assert!(
        hs.first_stage.p_reserve.iter().all(|&r| r < 1e-6),
        "reserve should be zero, got {:?}",
        hs.first_stage.p_reserve
    );
}

#[test]
fn no_upregulation_scenario_reserves_everything_risk_free() {
    let params = ThermalParams::default();
    let spec = FreezerSpec {
        p_base: vec![0.8, 1.1],
        p_min: 0.0,
        p_nom: 2.0,
        lambda_penalty: 3000.0,
        defrost_hours: vec![1],
    };
    let exo = ExogenousDay::two_regime(8, params.dt, 0.7, 0.7, 20.0, &[], OpeningHours::default());
    let scen = ScenarioSet {
        scenarios: vec![PriceScenario {
            lambda_s: vec![120.0, 90.0],
            lambda_b: vec![120.0, 90.0],
            source_date: None,
        }],
        probabilities: vec![1.0],
        lambda_r: vec![40.0, 25.0],
    };
    let bounds = PolicyBounds::default();
    let big_m = default_price_big_m(&scen, &bounds);
    let m = build_stochastic_mfrr_with(&spec, &params, &exo, &scen, big_m, &bounds, default_init()).unwrap();
    let hs = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();
    let en = enumerate_mfrr_optimum(&m).unwrap().expect("feasible");
    assert!((hs.objective - en.objective).abs() < 1e-9);
    // Full reservation on the non-defrost hour, nothing on the defrost hour,
    // objective is the pure reservation payment.
    assert!((hs.first_stage.p_reserve[0] - 0.8).abs() < 1e-6);
    assert!(hs.first_stage.p_reserve[1].abs() < 1e-9);
    assert!((hs.objective - 40.0 * 0.8 / 1000.0).abs() < 1e-9);
    assert!(hs.dispatch[0].p_up.iter().all(|&v| v.abs() < 1e-9));
}

#[test]
fn oracle_model_matches_enumeration_and_dominates_fixed_policies() {
    let params = ThermalParams::default();
    let inst = toy_2h_instance(77, 1);
    let day = PriceDay {
        date: "2022-06-01".parse().unwrap(),
        lambda_s: inst.scen.scenarios[0].lambda_s.clone(),
        lambda_b: inst.scen.scenarios[0].lambda_b.clone(),
        lambda_r: inst.scen.lambda_r.clone(),
    };
    let bounds = PolicyBounds::default();
    let big_m = default_price_big_m(&inst.scen, &bounds);
    let oracle = build_oracle(&inst.spec, &params, &inst.exo, &day, big_m).unwrap();
    let opts = SolveOptions::default();
    let hs = solve(&oracle, &HighsBackend, &opts).unwrap();
    let en = enumerate_mfrr_optimum(&oracle).unwrap().expect("feasible");
    assert!((hs.objective - en.objective).abs() < 1e-6 * (1.0 + hs.objective.abs()));

    for seed in 0..5u64 {
        let policy = tclflex_testkit::synth::random_fixed_policy(&inst, 900 + seed);
        let mut fixed = build_oracle(&inst.spec, &params, &inst.exo, &day, big_m).unwrap();
        fixed.fix_first_stage(&policy).unwrap();
        let f = solve(&fixed, &HighsBackend, &opts).unwrap();
        assert!(
            hs.objective >= f.objective - 1e-9,
            "oracle {} must dominate fixed policy {}",
            hs.objective,
            f.objective
        );
    }
}

#[test]
fn loadshift_toy_matches_enumeration() {
    let params = ThermalParams::default();
    let spec = FreezerSpec {
        p_base: vec![1.0, 1.0],
        p_min: 0.0,
        p_nom: 2.0,
        lambda_penalty: 3000.0,
        defrost_hours: vec![],
    };
    let exo = ExogenousDay::two_regime(8, params.dt, 0.7, 0.7, 20.0, &[], OpeningHours::default());
    for (ls_prices, tag) in [([420.0, 60.0], "high-low"), ([60.0, 420.0], "low-high"), ([100.0, 100.0], "flat")] {
        let ls = build_load_shift_hours(&spec, &params, &exo, &ls_prices, default_init()).unwrap();
        let plan = solve_load_shift(&ls, &HighsBackend, &SolveOptions::default()).unwrap();
        let en = enumerate_loadshift_optimum(&ls.model, &ls.vars, 2)
            .unwrap()
            .expect("feasible");
        let hs_cost: f64 = plan.p.iter().zip(&ls_prices).map(|(p, l)| p * l / 1000.0).sum();
        assert!(
            (hs_cost - en.objective).abs() < 1e-6 * (1.0 + en.objective.abs()),
            "{tag}: highs cost {hs_cost} vs enumeration {}",
            en.objective
        );
    }
}

#[test]
fn exported_mps_reparses_and_cross_solves() {
    // One hour, one scenario: 7 binaries, small enough for the generic
    // exhaustive route on the re-parsed text.
    let params = ThermalParams::default();
    let spec = FreezerSpec {
        p_base: vec![1.0],
        p_min: 0.2,
        p_nom: 1.6,
        lambda_penalty: 2500.0,
        defrost_hours: vec![],
    };
    let exo = ExogenousDay::two_regime(4, params.dt, 0.7, 0.7, 20.0, &[], OpeningHours::default());
    let scen = ScenarioSet {
        scenarios: vec![PriceScenario {
            lambda_s: vec![90.0],
            lambda_b: vec![260.0],
            source_date: None,
        }],
        probabilities: vec![1.0],
        lambda_r: vec![35.0],
    };
    let bounds = PolicyBounds::default();
    let big_m = default_price_big_m(&scen, &bounds);
    let m = build_stochastic_mfrr_with(&spec, &params, &exo, &scen, big_m, &bounds, default_init()).unwrap();
    let internal = solve(&m, &HighsBackend, &SolveOptions::default()).unwrap();

    let dir = tempfile_dir();
    let mps_path = dir.join("model.mps");
    let lp_path = dir.join("model.lp");
    export_model(&m.model, &mps_path, ExportFormat::Mps).unwrap();
    export_model(&m.model, &lp_path, ExportFormat::Lp).unwrap();

    let text = std::fs::read_to_string(&mps_path).unwrap();
    let reparsed = mpsread::parse_mps(&text, Sense::Maximize).unwrap();
    assert_eq!(reparsed.n_vars(), m.model.n_vars());
    assert_eq!(reparsed.n_rows(), m.model.n_rows());

    let names = mpsread::binary_names(&text);
    assert_eq!(names.len(), m.model.binary_ids().len());
    let binaries: Vec<_> = reparsed
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| names.contains(&v.name))
        .map(|(i, _)| tclflex::milp::ir::VarId::from_index_for_tests(i))
        .collect();
    let external = enumerate_generic(&reparsed, &binaries).unwrap().expect("feasible");
    assert!(
        (external.objective - internal.objective).abs() < 1e-6 * (1.0 + internal.objective.abs()),
        "external {} vs internal {}",
        external.objective,
        internal.objective
    );

    // LP text: independent count of rows and variables.
    let lp_text = std::fs::read_to_string(&lp_path).unwrap();
    let n_rows_lp = lp_text
        .lines()
        .skip_while(|l| !l.starts_with("Subject To"))
        .take_while(|l| !l.starts_with("Bounds"))
        .filter(|l| l.contains(':'))
        .count();
    assert_eq!(n_rows_lp, m.model.n_rows());

    std::fs::remove_dir_all(dir).ok();
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("tclflex-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
