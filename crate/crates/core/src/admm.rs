//! Consensus scenario decomposition of the reserve-bidding program.
//!
//! Non-anticipativity is relaxed by giving every scenario its own copy of the
//! first-stage vector x = (p_reserve_1..H, alpha, beta). Each round solves,
//! per scenario, the single-scenario problem augmented with dual prices and a
//! quadratic pull towards the consensus z; z is then the probability-weighted
//! average of the copies projected onto the first-stage box, and the duals
//! move by rho times the remaining disagreement.
//!
//! The quadratic pull is represented by tangent cuts on an epigraph variable
//! t >= x^2 (a uniform grid plus one tangent at the current penalty
//! minimizer, where the approximation is exact), which keeps every subproblem
//! a plain MILP. With binaries in the subproblems the whole scheme is a
//! heuristic: it carries no optimality certificate, and the result is always
//! flagged as such.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::ir::{CmpOp, LinExpr, Model, VarId};
use crate::milp::solver::{SolveOptions, SolverBackend};
use crate::milp::{
    build_stochastic_mfrr_with, solve as solve_mfrr, FirstStageDecision, MfrrModel, PolicyBounds,
    SecondStageDispatch,
};
use crate::prices::{format_float, FreezerSpec};
use crate::scenario::ScenarioSet;
use crate::thermal::{ExogenousDay, ThermalParams, ThermalState, DEFAULT_SETPOINT};

/// Tuning knobs; the paper names none of these, so they are configuration
/// with the defaults below.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Penalty weight per reserve coordinate; default mean reservation price
    /// (converted to currency per kW^2).
    #[serde(default)]
    pub rho_power: Option<f64>,
    /// Penalty weight for the alpha and beta coordinates; default mean spot
    /// price across scenarios (converted as above).
    #[serde(default)]
    pub rho_policy: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Primal stop: max copy-to-consensus deviation, relative to each
    /// coordinate's scale (P_Nom for reserves, the box for alpha/beta).
    #[serde(default = "default_tol")]
    pub primal_tol: f64,
    /// Dual stop: max consensus movement between rounds, same scaling.
    #[serde(default = "default_tol")]
    pub dual_tol: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Tangent-cut count per penalized coordinate.
    #[serde(default = "default_segments")]
    pub pwl_segments: usize,
    /// When the scenario count is at most this, also solve the extensive form
    /// directly and report the gap of the fixed consensus against it.
    #[serde(default = "default_direct_cap")]
    pub direct_solve_cap: usize,
    /// Per-subproblem solver settings.
    #[serde(default)]
    pub solve: SolveOptions,
}

fn default_max_iters() -> usize {
    200
}

fn default_tol() -> f64 {
    1e-3
}

fn default_segments() -> usize {
    64
}

fn default_direct_cap() -> usize {
    5
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho_power: None,
            rho_policy: None,
            max_iters: default_max_iters(),
            primal_tol: default_tol(),
            dual_tol: default_tol(),
            rng_seed: 0,
            pwl_segments: default_segments(),
            direct_solve_cap: default_direct_cap(),
            solve: SolveOptions::default(),
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if self.primal_tol <= 0.0 || self.dual_tol <= 0.0 {
            return Err(Error::invalid("tolerances must be positive"));
        }
        for r in [self.rho_power, self.rho_policy].into_iter().flatten() {
            if r <= 0.0 {
                return Err(Error::invalid("rho must be positive"));
            }
        }
        if self.pwl_segments < 2 {
            return Err(Error::invalid("pwl_segments must be at least 2"));
        }
        Ok(())
    }
}

/// One scenario's subproblem: the single-scenario model plus its weight.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub base: MfrrModel,
    pub probability: f64,
}

impl Subproblem {
    fn coord_vars(&self) -> Vec<VarId> {
        let mut v = self.base.p_reserve.clone();
        v.push(self.base.alpha);
        v.push(self.base.beta);
        v
    }
}

/// Residual trace of one round.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Probability-weighted base objective over the scenario copies.
    pub consensus_objective: f64,
}

/// Consensus vector, scenario copies and duals between rounds.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    /// Consensus first stage: reserves per hour, then alpha, then beta.
    pub z: Vec<f64>,
    pub duals: Vec<Vec<f64>>,
    pub copies: Vec<Vec<f64>>,
    pub history: Vec<IterationStats>,
}

/// Everything `run` reports besides the decision itself.
#[derive(Debug, Clone)]
pub struct AdmmDiagnostics {
    pub history: Vec<IterationStats>,
    pub converged: bool,
    /// Always true: binaries make consensus ADMM a heuristic with no
    /// optimality certificate.
    pub heuristic: bool,
    /// Expected objective after fixing the first stage to the consensus and
    /// re-solving every scenario.
    pub fixed_objective: f64,
    /// Relative gap of `fixed_objective` against the directly solved
    /// extensive form, when the scenario count allowed a direct solve.
    pub gap_vs_extensive: Option<f64>,
    /// Per-scenario dispatch under the fixed consensus first stage.
    pub dispatch: Vec<SecondStageDispatch>,
}

/// The decomposed problem, able to run the consensus loop.
#[derive(Debug, Clone)]
pub struct ScenarioDecomposition {
    pub subproblems: Vec<Subproblem>,
    spec: FreezerSpec,
    params: ThermalParams,
    exo: ExogenousDay,
    scen: ScenarioSet,
    big_m: f64,
    policy: PolicyBounds,
    init: ThermalState,
    /// Per-coordinate box, read off the first-stage variable bounds.
    pub(crate) bounds: Vec<(f64, f64)>,
    /// Per-coordinate residual scale.
    scales: Vec<f64>,
}

/// Splits the stochastic program into one single-scenario subproblem per
/// scenario, each with its own first-stage copy.
pub fn decompose(
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    scen: &ScenarioSet,
    big_m: f64,
) -> Result<ScenarioDecomposition> {
    decompose_with(
        spec,
        params,
        exo,
        scen,
        big_m,
        &PolicyBounds::default(),
        ThermalState::uniform(DEFAULT_SETPOINT),
    )
}

pub fn decompose_with(
    spec: &FreezerSpec,
    params: &ThermalParams,
    exo: &ExogenousDay,
    scen: &ScenarioSet,
    big_m: f64,
    policy: &PolicyBounds,
    init: ThermalState,
) -> Result<ScenarioDecomposition> {
    scen.validate()?;
    let mut subproblems = Vec::with_capacity(scen.len());
    for (w, sc) in scen.scenarios.iter().enumerate() {
        let single = ScenarioSet {
            scenarios: vec![sc.clone()],
            probabilities: vec![1.0],
            lambda_r: scen.lambda_r.clone(),
        };
        let base = build_stochastic_mfrr_with(spec, params, exo, &single, big_m, policy, init)?;
        subproblems.push(Subproblem {
            base,
            probability: scen.probabilities[w],
        });
    }
    let proto = &subproblems[0];
    let bounds: Vec<(f64, f64)> = proto
        .coord_vars()
        .iter()
        .map(|&v| {
            let def = proto.base.model.var(v);
            (def.lb, def.ub)
        })
        .collect();
    let n_hours = spec.n_hours();
    let scales: Vec<f64> = (0..bounds.len())
        .map(|i| if i < n_hours { spec.p_nom } else { bounds[i].1.max(1.0) })
        .collect();
    Ok(ScenarioDecomposition {
        subproblems,
        spec: spec.clone(),
        params: params.clone(),
        exo: exo.clone(),
        scen: scen.clone(),
        big_m,
        policy: *policy,
        init,
        bounds,
        scales,
    })
}

impl ScenarioDecomposition {
    pub fn n_scenarios(&self) -> usize {
        self.subproblems.len()
    }

    fn n_coords(&self) -> usize {
        self.bounds.len()
    }

    /// Penalty weights per coordinate, from config or the default scaling:
    /// mean reservation price per reserve coordinate, mean spot magnitude per
    /// policy coordinate, both per-kWh like the objective.
    fn rho(&self, config: &AdmmConfig) -> Vec<f64> {
        let n_hours = self.spec.n_hours();
        let mean_r = self.scen.lambda_r.iter().sum::<f64>() / self.scen.lambda_r.len() as f64;
        let mut sum_s = 0.0;
        let mut count = 0usize;
        for sc in &self.scen.scenarios {
            sum_s += sc.lambda_s.iter().map(|v| v.abs()).sum::<f64>();
            count += sc.lambda_s.len();
        }
        let mean_s = sum_s / count.max(1) as f64;
        let rho_power = config.rho_power.unwrap_or((mean_r / 1000.0).max(1e-6));
        let rho_policy = config.rho_policy.unwrap_or((mean_s / 1000.0).max(1e-6));
        (0..self.n_coords())
            .map(|i| if i < n_hours { rho_power } else { rho_policy })
            .collect()
    }

    fn project(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Fresh state: penalty-free solves, consensus = weighted average.
    pub fn initial_state(
        &self,
        config: &AdmmConfig,
        backend: &dyn SolverBackend,
    ) -> Result<ConsensusState> {
        config.validate()?;
        let (copies, _) = self.solve_round(None, config, backend)?;
        let mut z = self.weighted_average(&copies);
        self.project(&mut z);
        Ok(ConsensusState {
            z,
            duals: vec![vec![0.0; self.n_coords()]; self.n_scenarios()],
            copies,
            history: Vec::new(),
        })
    }

    fn weighted_average(&self, copies: &[Vec<f64>]) -> Vec<f64> {
        let mut z = vec![0.0; self.n_coords()];
        for (w, x) in copies.iter().enumerate() {
            let pi = self.subproblems[w].probability;
            for (zi, xi) in z.iter_mut().zip(x) {
                *zi += pi * xi;
            }
        }
        z
    }

    /// Solves every subproblem, optionally with the augmented objective.
    /// Returns the first-stage copies and the weighted base objective.
    fn solve_round(
        &self,
        penalty: Option<(&ConsensusState, &[f64], usize)>,
        config: &AdmmConfig,
        backend: &dyn SolverBackend,
    ) -> Result<(Vec<Vec<f64>>, f64)> {
        let results: Vec<Result<(Vec<f64>, f64)>> = self
            .subproblems
            .par_iter()
            .enumerate()
            .map(|(w, sub)| {
                let mut model = sub.base.model.clone();
                if let Some((state, rho, segments)) = penalty {
                    augment_with_penalty(
                        &mut model,
                        &sub.coord_vars(),
                        &self.bounds,
                        &state.z,
                        &state.duals[w],
                        rho,
                        segments,
                    );
                }
                let mut opts = config.solve.clone();
                opts.seed = config.rng_seed;
                let sol = backend.solve(&model, &opts).map_err(|e| {
                    Error::Solve(crate::error::SolveError::Backend(format!("subproblem {w}: {e}")))
                })?;
                let copy: Vec<f64> = sub.coord_vars().iter().map(|&v| sol.value(v)).collect();
                // Base objective of the copy, without penalty terms.
                let base_obj = sub.base.model.objective_value(sol.values());
                Ok((copy, base_obj))
            })
            .collect();
        let mut copies = Vec::with_capacity(self.n_scenarios());
        let mut expected = 0.0;
        for (w, r) in results.into_iter().enumerate() {
            let (copy, obj) = r?;
            expected += self.subproblems[w].probability * obj;
            copies.push(copy);
        }
        Ok((copies, expected))
    }

    /// One round: augmented solves, consensus averaging, dual step.
    pub fn iterate(
        &self,
        state: &mut ConsensusState,
        config: &AdmmConfig,
        backend: &dyn SolverBackend,
    ) -> Result<IterationStats> {
        config.validate()?;
        let rho = self.rho(config);
        let (copies, expected) =
            self.solve_round(Some((state, &rho, config.pwl_segments)), config, backend)?;

        let mut z_new = self.weighted_average(&copies);
        self.project(&mut z_new);

        let mut primal: f64 = 0.0;
        for copy in &copies {
            for i in 0..self.n_coords() {
                primal = primal.max((copy[i] - z_new[i]).abs() / self.scales[i]);
            }
        }
        let mut dual: f64 = 0.0;
        for i in 0..self.n_coords() {
            dual = dual.max((z_new[i] - state.z[i]).abs() / self.scales[i]);
        }

        for (w, copy) in copies.iter().enumerate() {
            for i in 0..self.n_coords() {
                state.duals[w][i] += rho[i] * (copy[i] - z_new[i]);
            }
        }

        let stats = IterationStats {
            iteration: state.history.len() + 1,
            primal_residual: primal,
            dual_residual: dual,
            consensus_objective: expected,
        };
        state.z = z_new;
        state.copies = copies;
        state.history.push(stats);
        Ok(stats)
    }

    /// Full loop: iterate to tolerance or `max_iters`, then fix the first
    /// stage to the consensus, re-solve each scenario once for implementable
    /// dispatch, and (on small instances) measure the gap against the
    /// directly solved extensive form.
    pub fn run(
        &self,
        config: &AdmmConfig,
        backend: &dyn SolverBackend,
    ) -> Result<(FirstStageDecision, AdmmDiagnostics)> {
        config.validate()?;
        let mut state = self.initial_state(config, backend)?;
        let mut converged = false;
        for _ in 0..config.max_iters {
            let stats = self.iterate(&mut state, config, backend)?;
            if stats.primal_residual < config.primal_tol && stats.dual_residual < config.dual_tol {
                converged = true;
                break;
            }
        }

        let decision = self.decision_from(&state.z);
        let (fixed_objective, dispatch) = self.evaluate_fixed(&decision, config, backend)?;

        let gap_vs_extensive = if self.n_scenarios() <= config.direct_solve_cap {
            let extensive = build_stochastic_mfrr_with(
                &self.spec,
                &self.params,
                &self.exo,
                &self.scen,
                self.big_m,
                &self.policy,
                self.init,
            )?;
            let direct = solve_mfrr(&extensive, backend, &config.solve)?;
            let denom = 1.0_f64.max(direct.objective.abs());
            Some((direct.objective - fixed_objective) / denom)
        } else {
            None
        };

        Ok((
            decision,
            AdmmDiagnostics {
                history: state.history,
                converged,
                heuristic: true,
                fixed_objective,
                gap_vs_extensive,
                dispatch,
            },
        ))
    }

    fn decision_from(&self, z: &[f64]) -> FirstStageDecision {
        let n_hours = self.spec.n_hours();
        let mut z = z.to_vec();
        self.project(&mut z);
        FirstStageDecision {
            p_reserve: z[..n_hours].to_vec(),
            alpha: z[n_hours],
            beta: z[n_hours + 1],
        }
    }

    /// Expected objective and per-scenario dispatch with the first stage
    /// pinned to `decision`. Always feasible: delivery shortfalls fall back
    /// to the penalty slack.
    pub fn evaluate_fixed(
        &self,
        decision: &FirstStageDecision,
        config: &AdmmConfig,
        backend: &dyn SolverBackend,
    ) -> Result<(f64, Vec<SecondStageDispatch>)> {
        let results: Vec<Result<(f64, SecondStageDispatch)>> = self
            .subproblems
            .par_iter()
            .map(|sub| {
                let mut fixed = sub.base.clone();
                fixed.fix_first_stage(decision)?;
                let sol = solve_mfrr(&fixed, backend, &config.solve)?;
                Ok((sol.objective, sol.dispatch.into_iter().next().expect("one scenario")))
            })
            .collect();
        let mut expected = 0.0;
        let mut dispatch = Vec::with_capacity(self.n_scenarios());
        for (w, r) in results.into_iter().enumerate() {
            let (obj, d) = r?;
            expected += self.subproblems[w].probability * obj;
            dispatch.push(d);
        }
        Ok((expected, dispatch))
    }
}

/// Adds `-dual*x - rho/2*(x - z)^2` to a maximization objective, with x^2
/// outer-approximated by tangent cuts: a uniform grid over the coordinate box
/// plus one tangent at the unconstrained penalty minimizer, where the
/// approximation is exact.
fn augment_with_penalty(
    model: &mut Model,
    coord_vars: &[VarId],
    bounds: &[(f64, f64)],
    z: &[f64],
    duals: &[f64],
    rho: &[f64],
    segments: usize,
) {
    let mut objective = LinExpr {
        terms: model.objective_terms().to_vec(),
        constant: model.objective_offset,
    };
    for (i, &x) in coord_vars.iter().enumerate() {
        let (lo, hi) = bounds[i];
        let center = z[i];
        let dual = duals[i];
        let r = rho[i];
        if (hi - lo).abs() < 1e-12 {
            // Coordinate pinned by its box (defrost hours): linear part only.
            objective.add_term(x, -dual + r * center);
            objective.constant += -r / 2.0 * center * center;
            continue;
        }
        let t = model.add_continuous(format!("pen_t_{i}"), 0.0, lo.abs().max(hi.abs()).powi(2));
        let minimizer = (center - dual / r).clamp(lo, hi);
        let mut grid: Vec<f64> = (0..=segments)
            .map(|k| lo + (hi - lo) * k as f64 / segments as f64)
            .collect();
        grid.push(minimizer);
        for (k, g) in grid.into_iter().enumerate() {
            // t >= 2 g x - g^2 (tangent of x^2 at g)
            model.add_row(
                format!("pen_cut_{i}_{k}"),
                LinExpr::from(t) - 2.0 * g * x,
                CmpOp::Ge,
                -g * g,
            );
        }
        // -dual*x - rho/2 * (t - 2 z x + z^2)
        objective.add_term(x, -dual + r * center);
        objective.add_term(t, -r / 2.0);
        objective.constant += -r / 2.0 * center * center;
    }
    model.set_objective(objective);
}

/// Writes the residual trace: `iteration,primal_residual,dual_residual,consensus_objective`.
pub fn write_diagnostics_csv(mut w: impl std::io::Write, history: &[IterationStats]) -> Result<()> {
    writeln!(w, "iteration,primal_residual,dual_residual,consensus_objective")
        .map_err(|e| Error::io("<admm writer>", e))?;
    for s in history {
        writeln!(
            w,
            "{},{},{},{}",
            s.iteration,
            format_float(s.primal_residual),
            format_float(s.dual_residual),
            format_float(s.consensus_objective)
        )
        .map_err(|e| Error::io("<admm writer>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::default_price_big_m;
    use crate::milp::solver::HighsBackend;
    use crate::scenario::PriceScenario;
    use crate::thermal::OpeningHours;

    fn toy_spec() -> FreezerSpec {
        FreezerSpec {
            p_base: vec![1.0, 1.0],
            p_min: 0.0,
            p_nom: 2.0,
            lambda_penalty: 2000.0,
            defrost_hours: vec![],
        }
    }

    fn toy_exo(params: &ThermalParams) -> ExogenousDay {
        ExogenousDay::two_regime(8, params.dt, 0.7, 0.7, 20.0, &[], OpeningHours::default())
    }

    fn scen(seed: u64, n: usize) -> ScenarioSet {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scenarios: Vec<PriceScenario> = (0..n)
            .map(|_| {
                let s0 = rng.gen_range(50.0..300.0);
                let s1 = rng.gen_range(50.0..300.0);
                let up0: f64 = if rng.gen_bool(0.5) { rng.gen_range(0.0..200.0) } else { 0.0 };
                let up1: f64 = if rng.gen_bool(0.5) { rng.gen_range(0.0..200.0) } else { 0.0 };
                PriceScenario {
                    lambda_s: vec![s0, s1],
                    lambda_b: vec![s0 + up0, s1 + up1],
                    source_date: None,
                }
            })
            .collect();
        ScenarioSet {
            scenarios,
            probabilities: vec![1.0 / n as f64; n],
            lambda_r: vec![15.0, 10.0],
        }
    }

    fn quick_config() -> AdmmConfig {
        AdmmConfig {
            max_iters: 30,
            ..AdmmConfig::default()
        }
    }

    #[test]
    fn single_scenario_returns_subproblem_optimum() {
        let spec = toy_spec();
        let params = ThermalParams::default();
        let exo = toy_exo(&params);
        let set = scen(3, 1);
        let big_m = default_price_big_m(&set, &PolicyBounds::default());
        let dec = decompose(&spec, &params, &exo, &set, big_m).unwrap();
        let (decision, diag) = dec.run(&quick_config(), &HighsBackend).unwrap();
        assert!(diag.converged);
        assert!(diag.heuristic);
        let gap = diag.gap_vs_extensive.expect("small instance solves directly");
        assert!(gap.abs() < 1e-6, "gap {gap}");
        decision.validate(&spec).unwrap();
    }

    #[test]
    fn identical_scenarios_agree_immediately() {
        let spec = toy_spec();
        let params = ThermalParams::default();
        let exo = toy_exo(&params);
        let mut set = scen(5, 1);
        set.scenarios.push(set.scenarios[0].clone());
        set.probabilities = vec![0.5, 0.5];
        let big_m = default_price_big_m(&set, &PolicyBounds::default());
        let dec = decompose(&spec, &params, &exo, &set, big_m).unwrap();
        let state = dec.initial_state(&quick_config(), &HighsBackend).unwrap();
        // Identical subproblems solved identically: copies agree with z.
        for copy in &state.copies {
            for (a, b) in copy.iter().zip(&state.z) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn first_consensus_is_weighted_average_of_copies() {
        let spec = toy_spec();
        let params = ThermalParams::default();
        let exo = toy_exo(&params);
        let set = scen(11, 3);
        let big_m = default_price_big_m(&set, &PolicyBounds::default());
        let dec = decompose(&spec, &params, &exo, &set, big_m).unwrap();
        let state = dec.initial_state(&quick_config(), &HighsBackend).unwrap();
        for i in 0..state.z.len() {
            let avg: f64 = state
                .copies
                .iter()
                .enumerate()
                .map(|(w, c)| dec.subproblems[w].probability * c[i])
                .sum();
            let projected = avg.clamp(dec.bounds[i].0, dec.bounds[i].1);
            assert!((state.z[i] - projected).abs() < 1e-12);
        }
    }

    #[test]
    fn three_scenario_consensus_close_to_extensive_form() {
        let spec = toy_spec();
        let params = ThermalParams::default();
        let exo = toy_exo(&params);
        let set = scen(17, 3);
        let big_m = default_price_big_m(&set, &PolicyBounds::default());
        let dec = decompose(&spec, &params, &exo, &set, big_m).unwrap();
        let (_, diag) = dec.run(&quick_config(), &HighsBackend).unwrap();
        let gap = diag.gap_vs_extensive.expect("direct solve expected");
        assert!(gap < 0.01, "gap {gap} too large");
        assert!(gap > -1e-6, "fixed consensus cannot beat the extensive optimum: {gap}");
    }

    #[test]
    fn reproducible_given_seed_and_settings() {
        let spec = toy_spec();
        let params = ThermalParams::default();
        let exo = toy_exo(&params);
        let set = scen(23, 3);
        let big_m = default_price_big_m(&set, &PolicyBounds::default());
        let dec = decompose(&spec, &params, &exo, &set, big_m).unwrap();
        let config = quick_config();
        let (d1, g1) = dec.run(&config, &HighsBackend).unwrap();
        let (d2, g2) = dec.run(&config, &HighsBackend).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(g1.history.len(), g2.history.len());
        for (a, b) in g1.history.iter().zip(&g2.history) {
            assert_eq!(a.primal_residual, b.primal_residual);
            assert_eq!(a.dual_residual, b.dual_residual);
        }
    }

    #[test]
    fn tenfold_rho_still_respects_first_stage_bounds() {
        let spec = toy_spec();
        let params = ThermalParams::default();
        let exo = toy_exo(&params);
        let set = scen(29, 2);
        let big_m = default_price_big_m(&set, &PolicyBounds::default());
        let dec = decompose(&spec, &params, &exo, &set, big_m).unwrap();
        let config = AdmmConfig {
            rho_power: Some(0.15),
            rho_policy: Some(3.0),
            max_iters: 10,
            ..AdmmConfig::default()
        };
        let (decision, _) = dec.run(&config, &HighsBackend).unwrap();
        decision.validate(&spec).unwrap();
        for (h, &r) in decision.p_reserve.iter().enumerate() {
            assert!(r <= spec.p_base[h] + 1e-9);
        }
    }

    #[test]
    fn diagnostics_csv_shape() {
        let history = vec![
            IterationStats {
                iteration: 1,
                primal_residual: 0.5,
                dual_residual: 0.2,
                consensus_objective: 1.25,
            },
            IterationStats {
                iteration: 2,
                primal_residual: 0.1,
                dual_residual: 0.05,
                consensus_objective: 1.5,
            },
        ];
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &history).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("iteration,primal_residual"));
    }
}
