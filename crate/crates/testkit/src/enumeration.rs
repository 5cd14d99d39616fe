//! Brute-force optimum for small reserve/load-shift instances.
//!
//! The start/stop and mutual-exclusion rows make (y, z) a function of the
//! regulation states u, so the free binaries are (u_up, u_dn) per hour plus
//! the activation indicator g where present. Every combination that survives
//! the pure-binary rows is completed by deriving (y, z), pinning all binaries
//! and solving the remaining LP with microlp, a simplex implementation that
//! shares nothing with the production backend. On a 2-hour, 2-scenario
//! instance that is at most 2^12 assignments.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use tclflex::milp::ir::{CmpOp, Model, Sense, VarId, VarKind};
use tclflex::milp::{MfrrModel, ScenarioVars};

/// Outcome of the exhaustive search.
#[derive(Debug, Clone)]
pub struct EnumOptimum {
    pub objective: f64,
    pub values: Vec<f64>,
    /// Assignments whose LP microlp could not solve cleanly (counted, not
    /// silently dropped; the caller decides whether that taints the run).
    pub lp_failures: usize,
    pub assignments_tried: usize,
}

/// Start/stop sequences implied by a state sequence with u_{-1} = 0.
fn derive_transitions(u: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let mut y = Vec::with_capacity(u.len());
    let mut z = Vec::with_capacity(u.len());
    let mut prev = false;
    for &on in u {
        y.push(on && !prev);
        z.push(!on && prev);
        prev = on;
    }
    (y, z)
}

/// One scenario's candidate binary assignment.
#[derive(Debug, Clone)]
struct ScenarioAssignment {
    u_up: Vec<bool>,
    u_dn: Vec<bool>,
    y_up: Vec<bool>,
    y_dn: Vec<bool>,
    z_up: Vec<bool>,
    z_dn: Vec<bool>,
    g: Option<Vec<bool>>,
}

/// Checks the rows that involve binaries only.
fn binary_rows_ok(a: &ScenarioAssignment) -> bool {
    let n = a.u_up.len();
    let mut cum_up = 0i32;
    let mut cum_dn = 0i32;
    for h in 0..n {
        if a.u_up[h] && a.u_dn[h] {
            return false;
        }
        if a.y_up[h] && a.y_dn[h] {
            return false;
        }
        if a.z_up[h] && a.z_dn[h] {
            return false;
        }
        // rebound starts the hour up-regulation stops
        if a.z_up[h] && !a.y_dn[h] {
            return false;
        }
        cum_up += a.y_up[h] as i32;
        cum_dn += a.y_dn[h] as i32;
        if cum_dn > cum_up {
            return false;
        }
    }
    true
}

/// All binary-feasible assignments for one scenario of `n_hours` hours.
fn scenario_assignments(n_hours: usize, with_g: bool) -> Vec<ScenarioAssignment> {
    let mut out = Vec::new();
    for up_bits in 0..(1u32 << n_hours) {
        for dn_bits in 0..(1u32 << n_hours) {
            let u_up: Vec<bool> = (0..n_hours).map(|h| up_bits >> h & 1 == 1).collect();
            let u_dn: Vec<bool> = (0..n_hours).map(|h| dn_bits >> h & 1 == 1).collect();
            let (y_up, z_up) = derive_transitions(&u_up);
            let (y_dn, z_dn) = derive_transitions(&u_dn);
            let proto = ScenarioAssignment {
                u_up,
                u_dn,
                y_up,
                y_dn,
                z_up,
                z_dn,
                g: None,
            };
            if !binary_rows_ok(&proto) {
                continue;
            }
            if with_g {
                for g_bits in 0..(1u32 << n_hours) {
                    let mut a = proto.clone();
                    a.g = Some((0..n_hours).map(|h| g_bits >> h & 1 == 1).collect());
                    out.push(a);
                }
            } else {
                out.push(proto);
            }
        }
    }
    out
}

fn apply_assignment(model: &mut Model, vars: &ScenarioVars, a: &ScenarioAssignment) {
    let fix = |m: &mut Model, ids: &[VarId], bits: &[bool]| {
        for (&v, &b) in ids.iter().zip(bits) {
            m.fix_var(v, if b { 1.0 } else { 0.0 });
        }
    };
    fix(model, &vars.u_up, &a.u_up);
    fix(model, &vars.u_dn, &a.u_dn);
    fix(model, &vars.y_up, &a.y_up);
    fix(model, &vars.y_dn, &a.y_dn);
    fix(model, &vars.z_up, &a.z_up);
    fix(model, &vars.z_dn, &a.z_dn);
    if let (Some(ids), Some(bits)) = (vars.g.as_ref(), a.g.as_ref()) {
        fix(model, ids, bits);
    }
}

/// Solves a model whose binaries are all pinned, as a pure LP, with microlp.
pub fn lp_refine(model: &Model) -> Result<Option<(f64, Vec<f64>)>, String> {
    let direction = match model.sense {
        Sense::Maximize => OptimizationDirection::Maximize,
        Sense::Minimize => OptimizationDirection::Minimize,
    };
    let mut obj = vec![0.0; model.n_vars()];
    for (v, c) in model.objective_terms() {
        obj[v.index()] = *c;
    }
    let mut p = Problem::new(direction);
    let vars: Vec<microlp::Variable> = model
        .vars()
        .iter()
        .enumerate()
        .map(|(i, v)| p.add_var(obj[i], (v.lb, v.ub)))
        .collect();
    for r in model.rows() {
        let terms: Vec<(microlp::Variable, f64)> =
            r.terms.iter().map(|(v, c)| (vars[v.index()], *c)).collect();
        let op = match r.op {
            CmpOp::Le => ComparisonOp::Le,
            CmpOp::Ge => ComparisonOp::Ge,
            CmpOp::Eq => ComparisonOp::Eq,
        };
        p.add_constraint(&terms, op, r.rhs);
    }
    match p.solve() {
        Ok(sol) => {
            let values: Vec<f64> = vars.iter().map(|&v| sol[v]).collect();
            Ok(Some(sol.objective() + model.objective_offset))
                .map(|o| o.map(|obj| (obj, values)))
        }
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(microlp::Error::Unbounded) => Err("unbounded LP in enumeration".into()),
        Err(e) => Err(format!("microlp failure: {e:?}")),
    }
}

/// Exhaustive optimum of a built reserve model (extensive form).
///
/// The first stage stays continuous and is optimized by the LP refinement of
/// every binary assignment, exactly mirroring what branch and bound explores.
pub fn enumerate_mfrr_optimum(mfrr: &MfrrModel) -> Result<Option<EnumOptimum>, String> {
    let n_hours = mfrr.dims.n_hours;
    let per_scenario: Vec<Vec<ScenarioAssignment>> = mfrr
        .scenarios
        .iter()
        .map(|sv| scenario_assignments(n_hours, sv.g.is_some()))
        .collect();

    let mut best: Option<EnumOptimum> = None;
    let mut failures = 0usize;
    let mut tried = 0usize;

    // Odometer over the cross product of per-scenario assignments.
    let mut idx = vec![0usize; per_scenario.len()];
    'outer: loop {
        let mut model = mfrr.model.clone();
        for (w, sv) in mfrr.scenarios.iter().enumerate() {
            apply_assignment(&mut model, sv, &per_scenario[w][idx[w]]);
        }
        tried += 1;
        match lp_refine(&model) {
            Ok(Some((obj, values))) => {
                let better = match (&best, mfrr.model.sense) {
                    (None, _) => true,
                    (Some(b), Sense::Maximize) => obj > b.objective,
                    (Some(b), Sense::Minimize) => obj < b.objective,
                };
                if better {
                    best = Some(EnumOptimum {
                        objective: obj,
                        values,
                        lp_failures: 0,
                        assignments_tried: 0,
                    });
                }
            }
            Ok(None) => {}
            Err(_) => failures += 1,
        }

        // advance odometer
        for w in 0..idx.len() {
            idx[w] += 1;
            if idx[w] < per_scenario[w].len() {
                continue 'outer;
            }
            idx[w] = 0;
        }
        break;
    }

    Ok(best.map(|mut b| {
        b.lp_failures = failures;
        b.assignments_tried = tried;
        b
    }))
}

/// Exhaustive optimum of a load-shifting model (single block, no g).
pub fn enumerate_loadshift_optimum(
    model: &Model,
    vars: &ScenarioVars,
    n_hours: usize,
) -> Result<Option<EnumOptimum>, String> {
    let assignments = scenario_assignments(n_hours, false);
    let mut best: Option<EnumOptimum> = None;
    let mut failures = 0usize;
    let mut tried = 0usize;
    for a in &assignments {
        let mut m = model.clone();
        apply_assignment(&mut m, vars, a);
        tried += 1;
        match lp_refine(&m) {
            Ok(Some((obj, values))) => {
                let better = match (&best, model.sense) {
                    (None, _) => true,
                    (Some(b), Sense::Maximize) => obj > b.objective,
                    (Some(b), Sense::Minimize) => obj < b.objective,
                };
                if better {
                    best = Some(EnumOptimum {
                        objective: obj,
                        values,
                        lp_failures: 0,
                        assignments_tried: 0,
                    });
                }
            }
            Ok(None) => {}
            Err(_) => failures += 1,
        }
    }
    Ok(best.map(|mut b| {
        b.lp_failures = failures;
        b.assignments_tried = tried;
        b
    }))
}

/// Plain exhaustive search over an explicit binary list, for models whose
/// structure is unknown (e.g. re-parsed from an exported file). 2^n LPs.
pub fn enumerate_generic(model: &Model, binaries: &[VarId]) -> Result<Option<EnumOptimum>, String> {
    assert!(binaries.len() <= 20, "generic enumeration is exponential");
    let mut best: Option<EnumOptimum> = None;
    let mut failures = 0usize;
    for bits in 0..(1u64 << binaries.len()) {
        let mut m = model.clone();
        for (k, &v) in binaries.iter().enumerate() {
            m.fix_var(v, (bits >> k & 1) as f64);
        }
        match lp_refine(&m) {
            Ok(Some((obj, values))) => {
                let better = match (&best, model.sense) {
                    (None, _) => true,
                    (Some(b), Sense::Maximize) => obj > b.objective,
                    (Some(b), Sense::Minimize) => obj < b.objective,
                };
                if better {
                    best = Some(EnumOptimum {
                        objective: obj,
                        values,
                        lp_failures: 0,
                        assignments_tried: 0,
                    });
                }
            }
            Ok(None) => {}
            Err(_) => failures += 1,
        }
    }
    Ok(best.map(|mut b| {
        b.lp_failures = failures;
        b.assignments_tried = 1usize << binaries.len();
        b
    }))
}

/// Sanity guard used by tests that rely on the derivation being lossless:
/// every binary in the model is one of the handled families.
pub fn all_binaries_covered(model: &Model, blocks: &[ScenarioVars]) -> bool {
    let mut covered = std::collections::HashSet::new();
    for sv in blocks {
        for ids in [&sv.u_up, &sv.u_dn, &sv.y_up, &sv.y_dn, &sv.z_up, &sv.z_dn] {
            covered.extend(ids.iter().map(|v| v.index()));
        }
        if let Some(g) = &sv.g {
            covered.extend(g.iter().map(|v| v.index()));
        }
    }
    model
        .vars()
        .iter()
        .enumerate()
        .all(|(i, v)| v.kind != VarKind::Binary || covered.contains(&i))
}
