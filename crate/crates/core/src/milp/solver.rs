//! Solver backend abstraction and the HiGHS implementation.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolveError};
use crate::milp::ir::{CmpOp, Model, Sense, VarId, VarKind};

/// What a backend can handle.
#[derive(Debug, Clone, Copy)]
pub struct SolverCapabilities {
    pub milp: bool,
    pub quadratic_objective: bool,
}

/// Solve control knobs; config keys `solver.time_limit_s` and `solver.mip_gap`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    #[serde(default = "default_time_limit")]
    pub time_limit_s: f64,
    #[serde(default = "default_mip_gap")]
    pub mip_gap: f64,
    /// Solver threads; 1 keeps runs bit-reproducible.
    #[serde(default = "default_threads")]
    pub threads: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_time_limit() -> f64 {
    120.0
}

fn default_mip_gap() -> f64 {
    1e-6
}

fn default_threads() -> u32 {
    1
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_limit_s: default_time_limit(),
            mip_gap: default_mip_gap(),
            threads: default_threads(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Proven optimal within the gap tolerance.
    Optimal,
    /// Feasible incumbent returned at the time limit, optimality not proven.
    IncumbentAtLimit,
}

/// A feasible point plus bound information.
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    /// Objective including any model offset.
    pub objective: f64,
    /// Relative MIP gap reported by the backend, when meaningful.
    pub gap: Option<f64>,
    values: Vec<f64>,
}

impl Solution {
    pub fn new(status: SolveStatus, objective: f64, gap: Option<f64>, values: Vec<f64>) -> Self {
        Solution {
            status,
            objective,
            gap,
            values,
        }
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.index()]
    }

    /// Binary value snapped to {0, 1}.
    pub fn binary(&self, v: VarId) -> bool {
        self.values[v.index()].round() != 0.0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Feasibility tolerance a returned incumbent is verified against.
pub const FEASIBILITY_TOL: f64 = 1e-6;

pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> SolverCapabilities;
    fn solve(&self, model: &Model, opts: &SolveOptions) -> Result<Solution, SolveError>;
}

/// HiGHS, the default backend.
#[derive(Debug, Default, Clone)]
pub struct HighsBackend;

impl SolverBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn capabilities(&self) -> SolverCapabilities {
        SolverCapabilities {
            milp: true,
            quadratic_objective: false,
        }
    }

    fn solve(&self, model: &Model, opts: &SolveOptions) -> Result<Solution, SolveError> {
        model.validate().map_err(|e| SolveError::Backend(e.to_string()))?;
        let mut pb = highs::RowProblem::default();
        let mut cols = Vec::with_capacity(model.n_vars());
        let mut obj = vec![0.0; model.n_vars()];
        for (v, c) in model.objective_terms() {
            obj[v.index()] = *c;
        }
        for (i, v) in model.vars().iter().enumerate() {
            let col = match v.kind {
                VarKind::Continuous => pb.add_column(obj[i], v.lb..=v.ub),
                VarKind::Binary => pb.add_integer_column(obj[i], v.lb..=v.ub),
            };
            cols.push(col);
        }
        for r in model.rows() {
            let factors: Vec<(highs::Col, f64)> =
                r.terms.iter().map(|(v, c)| (cols[v.index()], *c)).collect();
            match r.op {
                CmpOp::Le => pb.add_row(..=r.rhs, &factors),
                CmpOp::Ge => pb.add_row(r.rhs.., &factors),
                CmpOp::Eq => pb.add_row(r.rhs..=r.rhs, &factors),
            };
        }

        let sense = match model.sense {
            Sense::Maximize => highs::Sense::Maximise,
            Sense::Minimize => highs::Sense::Minimise,
        };
        let mut m = pb.optimise(sense);
        m.set_option("output_flag", false);
        m.set_option("time_limit", opts.time_limit_s);
        m.set_option("mip_rel_gap", opts.mip_gap);
        m.set_option("threads", opts.threads as i32);
        m.set_option("random_seed", (opts.seed % i32::MAX as u64) as i32);

        let solved = m.try_solve().map_err(|s| SolveError::Backend(format!("{s:?}")))?;
        use highs::HighsModelStatus as S;
        let status = match solved.status() {
            S::Optimal => SolveStatus::Optimal,
            S::Infeasible => {
                return Err(SolveError::Infeasible {
                    hint: "unattributed".into(),
                })
            }
            S::Unbounded | S::UnboundedOrInfeasible => return Err(SolveError::Unbounded),
            S::ReachedTimeLimit | S::ReachedIterationLimit => SolveStatus::IncumbentAtLimit,
            other => return Err(SolveError::Backend(format!("unexpected status {other:?}"))),
        };

        let raw = solved.get_solution();
        let values: Vec<f64> = raw.columns().to_vec();
        if values.len() != model.n_vars() {
            return Err(SolveError::TimeoutNoIncumbent {
                limit_s: opts.time_limit_s,
            });
        }
        // Guard against a stale/garbage point at the time limit.
        let violations = model.check_feasibility(&values, FEASIBILITY_TOL);
        if !violations.is_empty() {
            if status == SolveStatus::IncumbentAtLimit {
                return Err(SolveError::TimeoutNoIncumbent {
                    limit_s: opts.time_limit_s,
                });
            }
            return Err(SolveError::Backend(format!(
                "incumbent violates {} constraint(s), worst: {}",
                violations.len(),
                violations[0].what
            )));
        }

        let has_integers = model.vars().iter().any(|v| v.kind == VarKind::Binary);
        let gap = if has_integers { Some(solved.mip_gap()) } else { None };
        Ok(Solution::new(
            status,
            model.objective_value(&values),
            gap,
            values,
        ))
    }
}

/// Looks up a backend by its config name (`solver.name`).
pub fn backend_by_name(name: &str) -> Result<Box<dyn SolverBackend>, crate::error::Error> {
    match name {
        "highs" => Ok(Box::new(HighsBackend)),
        other => Err(crate::error::Error::invalid(format!(
            "unknown solver backend `{other}` (available: highs)"
        ))),
    }
}
